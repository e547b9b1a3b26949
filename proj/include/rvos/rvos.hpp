#pragma once

#include "rvos/attention.hpp"
#include "rvos/bench.hpp"
#include "rvos/config.hpp"
#include "rvos/encoders.hpp"
#include "rvos/fft.hpp"
#include "rvos/instance_decoder.hpp"
#include "rvos/io.hpp"
#include "rvos/losses.hpp"
#include "rvos/mask_optimizer.hpp"
#include "rvos/matching.hpp"
#include "rvos/metrics.hpp"
#include "rvos/model.hpp"
#include "rvos/multi_object.hpp"
#include "rvos/ops.hpp"
#include "rvos/params.hpp"
#include "rvos/patch_segmentation.hpp"
#include "rvos/pipeline.hpp"
#include "rvos/scene.hpp"
#include "rvos/spectral_fusion.hpp"
#include "rvos/tensor.hpp"
#include "rvos/train.hpp"
