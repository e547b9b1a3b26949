#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <vector>

#include "rvos/tensor.hpp"

namespace rvos {

struct SymmetryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Complex 2D frequency representation of a [C,H,W] map.
struct Spectrum {
  Shape shape;  // {C, H, W}
  std::vector<double> real;
  std::vector<double> imag;

  std::size_t channels() const { return shape.at(0); }
  std::size_t height() const { return shape.at(1); }
  std::size_t width() const { return shape.at(2); }
};

namespace detail {

using cplx = std::complex<double>;

// Unnormalized 1D DFT of one length. Radix-2 for powers of two, direct summation otherwise.
class DftPlan {
 public:
  explicit DftPlan(std::size_t n) : n_(n), pow2_(n > 0 && (n & (n - 1)) == 0), twiddle_(n) {
    for (std::size_t k = 0; k < n; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  // sign = -1 forward, +1 inverse (no scaling).
  void run(cplx* data, std::size_t stride, int sign, std::vector<cplx>& scratch) const {
    if (n_ <= 1) return;
    scratch.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) scratch[i] = data[i * stride];
    if (pow2_) {
      radix2(scratch, sign);
    } else {
      std::vector<cplx> out(n_);
      for (std::size_t k = 0; k < n_; ++k) {
        cplx acc = 0.0;
        for (std::size_t j = 0; j < n_; ++j) acc += scratch[j] * root((k * j) % n_, sign);
        out[k] = acc;
      }
      scratch.swap(out);
    }
    for (std::size_t i = 0; i < n_; ++i) data[i * stride] = scratch[i];
  }

 private:
  cplx root(std::size_t k, int sign) const { return sign < 0 ? twiddle_[k] : std::conj(twiddle_[k]); }

  void radix2(std::vector<cplx>& a, int sign) const {
    for (std::size_t i = 1, j = 0; i < n_; ++i) {
      std::size_t bit = n_ >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t step = n_ / len;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t j = 0; j < len / 2; ++j) {
          const cplx u = a[i + j];
          const cplx v = a[i + j + len / 2] * root(j * step, sign);
          a[i + j] = u + v;
          a[i + j + len / 2] = u - v;
        }
      }
    }
  }

  std::size_t n_;
  bool pow2_;
  std::vector<cplx> twiddle_;
};

inline const DftPlan& dft_plan(std::size_t n) {
  thread_local std::map<std::size_t, DftPlan> plans;
  auto it = plans.find(n);
  if (it == plans.end()) it = plans.emplace(n, DftPlan(n)).first;
  return it->second;
}

// In-place unnormalized 2D DFT of `planes` consecutive H x W complex planes.
inline void dft2_inplace(std::vector<cplx>& data, std::size_t planes, std::size_t h, std::size_t w, int sign) {
  const auto& row_plan = dft_plan(w);
  const auto& col_plan = dft_plan(h);
  std::vector<cplx> scratch;
  for (std::size_t p = 0; p < planes; ++p) {
    cplx* base = data.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) row_plan.run(base + y * w, 1, sign, scratch);
    for (std::size_t x = 0; x < w; ++x) col_plan.run(base + x, w, sign, scratch);
  }
}

inline void require_map(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected [C,H,W], got " + shape_str(x.shape()));
  if (x.dim(1) == 0 || x.dim(2) == 0) throw ShapeError(std::string(op) + ": empty spatial plane");
}

// Real [C,H,W] -> complex forward DFT.
inline std::vector<cplx> forward_real(std::span<const double> x, std::size_t c, std::size_t h, std::size_t w) {
  std::vector<cplx> data(x.begin(), x.end());
  dft2_inplace(data, c, h, w, -1);
  return data;
}

}  // namespace detail

/// Unnormalized forward DFT of every channel plane.
inline Spectrum fft2(const Tensor& x) {
  detail::require_map(x, "fft2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto data = detail::forward_real(x.data(), c, h, w);
  Spectrum s{x.shape(), std::vector<double>(data.size()), std::vector<double>(data.size())};
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.real[i] = data[i].real();
    s.imag[i] = data[i].imag();
  }
  return s;
}

/// Largest |X[u,v] - conj(X[-u,-v])| over all bins, relative to max(1, max |X|).
inline double hermitian_residue(const Spectrum& s) {
  const std::size_t c = s.channels(), h = s.height(), w = s.width();
  double residue = 0.0, magnitude = 1.0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t u = 0; u < h; ++u)
      for (std::size_t v = 0; v < w; ++v) {
        const std::size_t i = (ch * h + u) * w + v;
        const std::size_t j = (ch * h + (h - u) % h) * w + (w - v) % w;
        residue = std::max(residue, std::hypot(s.real[i] - s.real[j], s.imag[i] + s.imag[j]));
        magnitude = std::max(magnitude, std::hypot(s.real[i], s.imag[i]));
      }
  return residue / magnitude;
}

/// Inverse DFT scaled by 1/(H*W). The imaginary residue of the result must stay below `tolerance`
/// relative to max(1, max |x|); larger residues mean the spectrum was not Hermitian.
inline Tensor ifft2(const Spectrum& s, double tolerance = 1e-6) {
  if (s.shape.size() != 3 || s.real.size() != shape_numel(s.shape) || s.imag.size() != s.real.size()) {
    throw ShapeError("ifft2: malformed spectrum " + shape_str(s.shape));
  }
  const std::size_t c = s.channels(), h = s.height(), w = s.width();
  std::vector<detail::cplx> data(s.real.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = {s.real[i], s.imag[i]};
  detail::dft2_inplace(data, c, h, w, +1);
  const double inv = 1.0 / static_cast<double>(h * w);
  std::vector<double> out(data.size());
  double residue = 0.0, magnitude = 1.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = data[i].real() * inv;
    residue = std::max(residue, std::abs(data[i].imag() * inv));
    magnitude = std::max(magnitude, std::abs(out[i]));
  }
  if (residue / magnitude >= tolerance) {
    throw SymmetryError("ifft2: spectrum is not Hermitian; max imaginary residue " + std::to_string(residue));
  }
  return Tensor(s.shape, std::move(out));
}

/// Differentiable forward DFT: x[C,H,W] -> [2C,H,W] holding real parts in channels [0,C)
/// and imaginary parts in [C,2C). The adjoint is the unnormalized inverse transform.
inline Tensor spectral_forward(const Tensor& x) {
  detail::require_map(x, "spectral_forward");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), n = c * h * w;
  const auto data = detail::forward_real(x.data(), c, h, w);
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = data[i].real();
    out[n + i] = data[i].imag();
  }
  return detail::make_result({2 * c, h, w}, std::move(out), {x}, [x, c, h, w, n](const std::vector<double>& g) {
    auto* gx = detail::grad_of(x);
    if (!gx) return;
    std::vector<detail::cplx> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = {g[i], g[n + i]};
    detail::dft2_inplace(data, c, h, w, +1);
    for (std::size_t i = 0; i < n; ++i) (*gx)[i] += data[i].real();
  }, "spectral_forward");
}

/// Differentiable inverse DFT keeping the real part: [2C,H,W] stacked spectrum -> [C,H,W].
/// The adjoint is the forward transform scaled by 1/(H*W).
inline Tensor spectral_inverse_real(const Tensor& s) {
  detail::require_map(s, "spectral_inverse_real");
  if (s.dim(0) % 2) throw ShapeError("spectral_inverse_real: odd stacked channel count");
  const std::size_t c = s.dim(0) / 2, h = s.dim(1), w = s.dim(2), n = c * h * w;
  const auto sv = s.data();
  std::vector<detail::cplx> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = {sv[i], sv[n + i]};
  detail::dft2_inplace(data, c, h, w, +1);
  const double inv = 1.0 / static_cast<double>(h * w);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = data[i].real() * inv;
  return detail::make_result({c, h, w}, std::move(out), {s}, [s, c, h, w, n, inv](const std::vector<double>& g) {
    auto* gs = detail::grad_of(s);
    if (!gs) return;
    std::vector<detail::cplx> data(g.begin(), g.end());
    detail::dft2_inplace(data, c, h, w, -1);
    for (std::size_t i = 0; i < n; ++i) {
      (*gs)[i] += data[i].real() * inv;
      (*gs)[n + i] += data[i].imag() * inv;
    }
  }, "spectral_inverse_real");
}

}  // namespace rvos
