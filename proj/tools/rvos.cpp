// Command-line driver: gen, train, infer, eval, bench.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rvos/rvos.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const std::string& path, const json& j) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw rvos::FormatError("cannot write " + path);
  out << j.dump(2) << "\n";
}

int cmd_gen(std::uint64_t seed, const std::string& out, const rvos::SceneKnobs& knobs) {
  const auto scene = rvos::generate_scene(seed, knobs);
  rvos::save_scene(out, scene);
  std::cout << "wrote " << scene.name() << " (" << scene.expressions.size() << " expressions, " << scene.frames.size()
            << " frames) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, bool quiet) {
  const auto cfg = rvos::load_config(config_path);
  const auto result = rvos::train_desk_scale(cfg, out, [&](std::size_t it, double loss) {
    if (!quiet && (it % 50 == 0 || it + 1 == cfg.train.iterations)) std::cout << "iter " << it << " loss " << loss << "\n";
  });
  const auto report = rvos::evaluate_model(*result.model, rvos::make_corpus(cfg.data),
                                           cfg.train.multi_object ? rvos::Mode::multi : rvos::Mode::single);
  write_json((fs::path(out) / "train_report.json").string(),
             {{"iterations", cfg.train.iterations},
              {"seconds", result.seconds},
              {"final_loss", result.losses.empty() ? 0.0 : result.losses.back()},
              {"J", report.j},
              {"F", report.f},
              {"JF", report.jf}});
  std::cout << "trained " << cfg.train.iterations << " iterations in " << result.seconds << " s, J&F on training scenes "
            << report.jf << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& scene_dir, const std::string& mode_name,
              const std::string& out, bool dump_logits) {
  const auto ckpt = rvos::load_checkpoint(ckpt_path);
  const auto scene = rvos::load_scene(scene_dir);
  rvos::PipelineCounters counters;
  const auto preds = rvos::run_pipeline(*ckpt.model, scene, rvos::parse_mode(mode_name), &counters);
  json scores, boxes;
  for (std::size_t e = 0; e < preds.size(); ++e) {
    const std::string key = rvos::expression_dir(e);
    const fs::path dir = fs::path(out) / key;
    fs::create_directories(dir);
    for (std::size_t t = 0; t < preds[e].masks.size(); ++t) {
      rvos::write_pgm((dir / rvos::frame_file(t, "pgm")).string(), rvos::BinaryMask::from_logits(preds[e].masks[t]));
      if (dump_logits) rvos::save_sgt1((dir / rvos::frame_file(t, "sgt")).string(), preds[e].masks[t]);
      const auto& b = preds[e].boxes[t];
      boxes[key].push_back({b[0], b[1], b[2], b[3]});
    }
    scores[key] = preds[e].score;
  }
  write_json((fs::path(out) / "scores.json").string(), scores);
  write_json((fs::path(out) / "boxes.json").string(), boxes);
  std::cout << "wrote " << preds.size() << " expressions to " << out << " (visual encoder calls: "
            << counters.visual_encoder << ")\n";
  return 0;
}

// Pairs every gt/<...>/<object>/<frame>.pgm with pred/<...>/<object>/<frame>.pgm.
int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& report_path) {
  std::map<std::string, rvos::ObjectSequence> objects;
  std::vector<rvos::MaskPair> pairs;
  std::vector<std::pair<std::string, rvos::MaskPair>> keyed;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(gt_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw rvos::MetricError("eval: no .pgm masks under " + gt_dir);

  json scores_json = json::object();
  if (std::ifstream in(fs::path(pred_dir) / "scores.json"); in) in >> scores_json;

  for (const auto& gt_path : files) {
    const fs::path rel = fs::relative(gt_path, gt_dir);
    const fs::path pred_path = fs::path(pred_dir) / rel;
    if (!fs::exists(pred_path)) throw rvos::MetricError("eval: missing prediction " + pred_path.string());
    const std::string object = rel.parent_path().generic_string();
    auto& seq = objects[object];
    seq.video = rel.parent_path().parent_path().generic_string();
    rvos::MaskPair pair{rvos::read_pgm(pred_path.string()), rvos::read_pgm(gt_path.string())};
    seq.frames.push_back(pair);
    pairs.push_back(pair);
    keyed.emplace_back(object, pair);
  }
  std::vector<rvos::ObjectSequence> seqs;
  for (auto& [k, s] : objects) seqs.push_back(s);
  std::vector<rvos::ScoredPrediction> scored;
  for (const auto& [object, pair] : keyed) {
    const double score = scores_json.contains(object) ? scores_json[object].get<double>() : 1.0;
    scored.push_back({pair, score});
  }
  const auto jf = rvos::jf_mean(seqs);
  const json report = {{"J", jf.j},
                       {"F", jf.f},
                       {"JF", jf.jf},
                       {"overall_iou", rvos::overall_iou(pairs)},
                       {"mean_iou", rvos::mean_iou(pairs)},
                       {"mAP", rvos::map_at_thresholds(scored)}};
  write_json(report_path, report);
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& report_path, std::size_t repeats, std::uint64_t seed) {
  const auto ckpt = rvos::load_checkpoint(ckpt_path);
  const auto scene = rvos::generate_scene(seed, rvos::bench_scene_knobs(10));
  const auto rows = rvos::bench_throughput(*ckpt.model, scene, {1, 2, 5, 10}, repeats);
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"expressions", r.expressions},
                     {"single_ms_per_object", r.single_ms},
                     {"multi_ms_per_object", r.multi_ms},
                     {"speedup", r.speedup},
                     {"encoder_calls_single", r.encoder_calls_single},
                     {"encoder_calls_multi", r.encoder_calls_multi}});
    std::cout << "N_expr=" << r.expressions << " single " << r.single_ms << " ms multi " << r.multi_ms
              << " ms speedup " << r.speedup << "\n";
  }
  const auto drift = rvos::drift_demo(*ckpt.model, rvos::make_corpus(ckpt.config.data));
  write_json(report_path, {{"latency", table},
                           {"speedup_at_10", rows.back().speedup},
                           {"encoder_calls_multi", rows.back().encoder_calls_multi},
                           {"drift", {{"decoder", drift.decoder_drift}, {"random_halves", drift.split_drift},
                                      {"tokens", drift.tokens}}}});
  std::cout << "drift decoder " << drift.decoder_drift << " vs random halves " << drift.split_drift << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referring video segmentation toolkit on synthetic scenes"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene");
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  rvos::SceneKnobs knobs;
  gen->add_option("--seed", gen_seed, "Scene seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--height", knobs.height, "Frame height (multiple of 32)");
  gen->add_option("--width", knobs.width, "Frame width (multiple of 32)");
  gen->add_option("--frames", knobs.frames, "Number of frames");
  gen->add_option("--objects", knobs.objects, "Number of objects");
  gen->add_option("--expressions", knobs.expressions, "Number of referring expressions");

  auto* train = app.add_subcommand("train", "Train on the configured synthetic corpus");
  std::string train_config, train_out;
  bool quiet = false;
  train->add_option("--config", train_config, "key = value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_flag("--quiet", quiet, "Suppress per-iteration logging");

  auto* infer = app.add_subcommand("infer", "Segment a scene with a checkpoint");
  std::string infer_ckpt, infer_scene, infer_mode = "single", infer_out;
  bool dump_logits = false;
  infer->add_option("--ckpt", infer_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--scene", infer_scene, "Scene directory written by gen")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--mode", infer_mode, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  infer->add_flag("--multi-object", [&](std::int64_t) { infer_mode = "multi"; }, "Shorthand for --mode multi");
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_flag("--dump-logits", dump_logits, "Also write mask logits as SGT1 tensors");

  auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  std::string eval_pred, eval_gt, eval_report;
  eval->add_option("--pred", eval_pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", eval_gt, "Ground-truth directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--report", eval_report, "JSON report path")->required();

  auto* bench = app.add_subcommand("bench", "Single vs multi-object latency and drift diagnostic");
  std::string bench_ckpt, bench_report;
  std::size_t repeats = 5;
  std::uint64_t bench_seed = 4242;
  bench->add_option("--ckpt", bench_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  bench->add_option("--report", bench_report, "JSON report path")->required();
  bench->add_option("--repeats", repeats, "Timed runs per setting");
  bench->add_option("--seed", bench_seed, "Bench scene seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_gen(gen_seed, gen_out, knobs);
    if (train->parsed()) return cmd_train(train_config, train_out, quiet);
    if (infer->parsed()) return cmd_infer(infer_ckpt, infer_scene, infer_mode, infer_out, dump_logits);
    if (eval->parsed()) return cmd_eval(eval_pred, eval_gt, eval_report);
    if (bench->parsed()) return cmd_bench(bench_ckpt, bench_report, repeats, bench_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
