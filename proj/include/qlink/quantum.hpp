#pragma once

// Dense density-operator arithmetic for elementary-link memories: states,
// Kraus channels, repeated memory decoherence and fidelity curves.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qlink/errors.hpp"

namespace qlink::quantum {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kPsdTol = -1e-10;
inline constexpr double kNormTol = 1e-12;
inline constexpr double kCompletenessTol = 1e-12;
inline constexpr int kMaxChannelDim = 64;

struct StateDiagnostics {
  double hermiticity_error = 0.0;  // max |rho_ij - conj(rho_ji)|
  double trace_error = 0.0;        // |Tr rho - 1|
  double min_eigenvalue = 0.0;     // of the Hermitian part

  bool valid() const {
    return hermiticity_error <= kHermitianTol && trace_error <= kTraceTol &&
           min_eigenvalue >= kPsdTol;
  }
};

inline StateDiagnostics diagnose(const Matrix& m) {
  StateDiagnostics d;
  d.hermiticity_error = (m - m.adjoint()).cwiseAbs().maxCoeff();
  d.trace_error = std::abs(m.trace() - Complex(1.0, 0.0));
  Matrix herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  return d;
}

class PureState {
 public:
  explicit PureState(Vector amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.size() == 0) throw DimensionError("pure state must have dim >= 1");
    if (std::abs(amps_.norm() - 1.0) > kNormTol) {
      throw ParameterError("pure state is not normalized (norm " +
                           std::to_string(amps_.norm()) + ")");
    }
  }

  int dim() const { return static_cast<int>(amps_.size()); }
  const Vector& amplitudes() const { return amps_; }
  Matrix projector() const { return amps_ * amps_.adjoint(); }

 private:
  Vector amps_;
};

class DensityOperator {
 public:
  explicit DensityOperator(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0) {
      throw DimensionError("density operator must be a non-empty square matrix");
    }
    const StateDiagnostics d = diagnose(m_);
    if (d.hermiticity_error > kHermitianTol) {
      throw ParameterError("density operator is not Hermitian (error " +
                           std::to_string(d.hermiticity_error) + ")");
    }
    if (d.trace_error > kTraceTol) {
      throw ParameterError("density operator does not have unit trace");
    }
    if (d.min_eigenvalue < kPsdTol) {
      throw ParameterError("density operator is not positive semidefinite (min eigenvalue " +
                           std::to_string(d.min_eigenvalue) + ")");
    }
  }

  // Skips the eigenvalue check; for results that are valid by construction
  // (tensor products and convex mixtures of valid states).
  static DensityOperator trusted(Matrix m) { return DensityOperator(std::move(m), Trusted{}); }

  static DensityOperator from_pure(const PureState& psi) {
    return trusted(psi.projector());
  }

  static DensityOperator maximally_mixed(int dim) {
    if (dim < 1) throw DimensionError("dimension must be positive");
    return trusted(Matrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }

 private:
  struct Trusted {};
  DensityOperator(Matrix m, Trusted) : m_(std::move(m)) {}
  Matrix m_;
};

enum class Completeness { TracePreserving, TraceNonIncreasing };

class KrausChannel {
 public:
  KrausChannel(std::vector<Matrix> ops,
               Completeness mode = Completeness::TracePreserving)
      : ops_(std::move(ops)), mode_(mode) {
    if (ops_.empty()) throw ParameterError("Kraus family must be nonempty");
    dim_out_ = static_cast<int>(ops_.front().rows());
    dim_in_ = static_cast<int>(ops_.front().cols());
    if (dim_in_ == 0 || dim_out_ == 0) throw DimensionError("Kraus operators must be non-empty");
    Matrix sum = Matrix::Zero(dim_in_, dim_in_);
    for (const auto& k : ops_) {
      if (k.rows() != dim_out_ || k.cols() != dim_in_) {
        throw DimensionError("Kraus operators have inconsistent shapes");
      }
      sum += k.adjoint() * k;
    }
    const Matrix id = Matrix::Identity(dim_in_, dim_in_);
    if (mode_ == Completeness::TracePreserving) {
      if ((sum - id).cwiseAbs().maxCoeff() > kCompletenessTol) {
        throw ParameterError("Kraus family is not trace preserving");
      }
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(id - sum, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -kCompletenessTol) {
        throw ParameterError("Kraus family is not trace non-increasing");
      }
    }
  }

  int dim_in() const { return dim_in_; }
  int dim_out() const { return dim_out_; }
  const std::vector<Matrix>& kraus_ops() const { return ops_; }
  bool trace_preserving() const { return mode_ == Completeness::TracePreserving; }

 private:
  std::vector<Matrix> ops_;
  Completeness mode_;
  int dim_in_ = 0;
  int dim_out_ = 0;
};

// Kraus action sum_k K rho K^dagger without any normalization.
inline Matrix apply_kraus(const KrausChannel& channel, const Matrix& rho) {
  if (rho.rows() != channel.dim_in() || rho.cols() != channel.dim_in()) {
    throw DimensionError("channel input dimension " + std::to_string(channel.dim_in()) +
                         " does not match operand dimension " + std::to_string(rho.rows()));
  }
  Matrix out = Matrix::Zero(channel.dim_out(), channel.dim_out());
  for (const auto& k : channel.kraus_ops()) out.noalias() += k * rho * k.adjoint();
  return out;
}

inline DensityOperator apply_channel(const KrausChannel& channel, const DensityOperator& rho) {
  if (!channel.trace_preserving()) {
    throw ParameterError("apply_channel needs a trace-preserving channel; use apply_kraus");
  }
  return DensityOperator(apply_kraus(channel, rho.matrix()));
}

// rho(m): the channel applied m times to rho0.
inline DensityOperator memory_evolve(const DensityOperator& rho0, const KrausChannel& channel,
                                     int m) {
  if (m < 0) throw ParameterError("number of memory steps must be non-negative");
  if (channel.dim_in() != channel.dim_out()) {
    throw DimensionError("memory channel must map a space to itself");
  }
  if (rho0.dim() != channel.dim_in()) throw DimensionError("state and channel dimensions differ");
  if (m == 0) return rho0;
  Matrix cur = rho0.matrix();
  for (int i = 0; i < m; ++i) cur = apply_kraus(channel, cur);
  return DensityOperator(std::move(cur));
}

inline double fidelity(const Matrix& rho, const PureState& psi) {
  if (rho.rows() != psi.dim() || rho.cols() != psi.dim()) {
    throw DimensionError("state and target dimensions differ");
  }
  const Complex f = psi.amplitudes().dot(rho * psi.amplitudes());
  if (std::abs(f.imag()) > 1e-12) {
    throw NumericError("fidelity has non-negligible imaginary part; inputs are not valid states");
  }
  double r = f.real();
  if (r < -1e-12 || r > 1.0 + 1e-12) throw NumericError("fidelity outside [0,1]");
  return std::clamp(r, 0.0, 1.0);
}

inline double fidelity(const DensityOperator& rho, const PureState& psi) {
  return fidelity(rho.matrix(), psi);
}

// ---------------------------------------------------------------------------
// Preset channels and states

namespace detail {

// Generalized Pauli (Weyl) operators X^a Z^b on C^d.
inline Matrix weyl(int d, int a, int b) {
  Matrix w = Matrix::Zero(d, d);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (int j = 0; j < d; ++j) {
    const Complex phase = std::polar(1.0, two_pi * b * j / d);
    w((j + a) % d, j) = phase;
  }
  return w;
}

inline void require_dim(int d) {
  if (d < 1 || d > kMaxChannelDim) {
    throw DimensionError("channel dimension must lie in [1," + std::to_string(kMaxChannelDim) + "]");
  }
}

}  // namespace detail

inline KrausChannel identity_channel(int d) {
  detail::require_dim(d);
  return KrausChannel({Matrix::Identity(d, d)});
}

// rho -> lambda rho + (1 - lambda) Tr[rho] I/d
inline KrausChannel depolarizing_channel(double lambda, int d) {
  detail::require_dim(d);
  qlink::detail::require_probability(lambda, "depolarizing parameter");
  const double dd = static_cast<double>(d) * d;
  std::vector<Matrix> ops;
  ops.push_back(std::sqrt(lambda + (1.0 - lambda) / dd) * Matrix::Identity(d, d));
  if (lambda < 1.0) {
    const double c = std::sqrt((1.0 - lambda) / dd);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        if (a != 0 || b != 0) ops.push_back(c * detail::weyl(d, a, b));
  }
  return KrausChannel(std::move(ops));
}

// rho -> lambda rho + (1 - lambda) diag(rho)
inline KrausChannel dephasing_channel(double lambda, int d) {
  detail::require_dim(d);
  qlink::detail::require_probability(lambda, "dephasing parameter");
  std::vector<Matrix> ops;
  ops.push_back(std::sqrt(lambda + (1.0 - lambda) / d) * Matrix::Identity(d, d));
  if (lambda < 1.0) {
    const double c = std::sqrt((1.0 - lambda) / d);
    for (int b = 1; b < d; ++b) ops.push_back(c * detail::weyl(d, 0, b));
  }
  return KrausChannel(std::move(ops));
}

inline KrausChannel preset_channel(std::string_view name, double lambda, int d) {
  if (name == "identity") return identity_channel(d);
  if (name == "depolarizing") return depolarizing_channel(lambda, d);
  if (name == "dephasing") return dephasing_channel(lambda, d);
  throw ParameterError("unknown channel preset '" + std::string(name) + "'");
}

inline KrausChannel tensor_channel(std::span<const KrausChannel> channels) {
  if (channels.empty()) throw ParameterError("tensor_channel needs at least one channel");
  std::vector<Matrix> ops = channels.front().kraus_ops();
  bool tp = channels.front().trace_preserving();
  for (std::size_t i = 1; i < channels.size(); ++i) {
    std::vector<Matrix> next;
    next.reserve(ops.size() * channels[i].kraus_ops().size());
    for (const auto& a : ops)
      for (const auto& b : channels[i].kraus_ops())
        next.push_back(Eigen::kroneckerProduct(a, b).eval());
    ops = std::move(next);
    tp = tp && channels[i].trace_preserving();
  }
  if (ops.front().cols() > kMaxChannelDim) {
    throw DimensionError("tensor product exceeds the supported channel dimension");
  }
  return KrausChannel(std::move(ops),
                      tp ? Completeness::TracePreserving : Completeness::TraceNonIncreasing);
}

inline KrausChannel tensor_channel(std::initializer_list<KrausChannel> channels) {
  std::vector<KrausChannel> v(channels);
  return tensor_channel(std::span<const KrausChannel>(v));
}

inline PureState bell_phi_plus() {
  Vector v = Vector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return PureState(std::move(v));
}

inline PureState ghz(int k) {
  if (k < 2 || k > 6) throw ParameterError("GHZ states are supported for 2 <= k <= 6 nodes");
  const int d = 1 << k;
  Vector v = Vector::Zero(d);
  v(0) = v(d - 1) = 1.0 / std::sqrt(2.0);
  return PureState(std::move(v));
}

// F0 |Phi+><Phi+| + (1 - F0)/3 (I - |Phi+><Phi+|)
inline DensityOperator werner(double f0) {
  qlink::detail::require_probability(f0, "Werner fidelity");
  const Matrix phi = bell_phi_plus().projector();
  const Matrix rest = Matrix::Identity(4, 4) - phi;
  return DensityOperator(f0 * phi + ((1.0 - f0) / 3.0) * rest);
}

inline PureState tensor(const PureState& a, const PureState& b) {
  return PureState(Eigen::kroneckerProduct(a.amplitudes(), b.amplitudes()).eval());
}

inline DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
  return DensityOperator::trusted(Eigen::kroneckerProduct(a.matrix(), b.matrix()).eval());
}

// ---------------------------------------------------------------------------
// Fidelity curves m -> f_m = <psi| N^m(rho0) |psi>

class FidelityCurve {
 public:
  enum class Kind { ChannelPowered, ClosedForm };

  FidelityCurve(std::function<double(int)> eval, Kind kind, std::string label = {})
      : eval_(std::move(eval)), kind_(kind), label_(std::move(label)) {}

  double operator()(int m) const {
    if (m < 0) throw ParameterError("fidelity curve evaluated at negative memory time");
    const double f = eval_(m);
    if (!(f >= -1e-12 && f <= 1.0 + 1e-12)) throw NumericError("fidelity curve left [0,1]");
    return std::clamp(f, 0.0, 1.0);
  }

  Kind kind() const { return kind_; }
  const std::string& label() const { return label_; }

  std::vector<double> tabulate(int max_m) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(max_m) + 1);
    for (int m = 0; m <= max_m; ++m) out.push_back((*this)(m));
    return out;
  }

 private:
  std::function<double(int)> eval_;
  Kind kind_;
  std::string label_;
};

// Applies the channel step by step; values are cached and shared between
// copies of the curve.
inline FidelityCurve channel_powered_curve(DensityOperator rho0, KrausChannel channel,
                                           PureState target) {
  if (rho0.dim() != channel.dim_in() || channel.dim_in() != channel.dim_out() ||
      target.dim() != rho0.dim()) {
    throw DimensionError("state, channel and target dimensions disagree");
  }
  struct Cache {
    Cache(Matrix m, KrausChannel c, PureState t)
        : current(std::move(m)), channel(std::move(c)), target(std::move(t)) {}
    std::mutex mu;
    Matrix current;
    std::vector<double> values;
    KrausChannel channel;
    PureState target;
  };
  auto cache = std::make_shared<Cache>(rho0.matrix(), std::move(channel), std::move(target));
  cache->values.push_back(fidelity(cache->current, cache->target));
  return FidelityCurve(
      [cache](int m) {
        std::lock_guard<std::mutex> lock(cache->mu);
        while (static_cast<int>(cache->values.size()) <= m) {
          cache->current = apply_kraus(cache->channel, cache->current);
          cache->values.push_back(fidelity(cache->current, cache->target));
        }
        return cache->values[static_cast<std::size_t>(m)];
      },
      FidelityCurve::Kind::ChannelPowered, "channel-powered");
}

// Global depolarizing memory on C^d: f_m = lambda^m f0 + (1 - lambda^m)/d.
inline FidelityCurve depolarizing_curve(double f0, double lambda, int d) {
  qlink::detail::require_probability(f0, "initial fidelity");
  qlink::detail::require_probability(lambda, "depolarizing parameter");
  if (d < 1) throw DimensionError("dimension must be positive");
  return FidelityCurve(
      [=](int m) {
        const double l = std::pow(lambda, m);
        return l * f0 + (1.0 - l) / d;
      },
      FidelityCurve::Kind::ClosedForm, "depolarizing");
}

// Per-qubit dephasing of both halves of |Phi+>: f_m = (1 + lambda^(2m))/2.
inline FidelityCurve dephasing_bell_curve(double lambda) {
  qlink::detail::require_probability(lambda, "dephasing parameter");
  return FidelityCurve([=](int m) { return 0.5 * (1.0 + std::pow(lambda, 2 * m)); },
                       FidelityCurve::Kind::ClosedForm, "dephasing-bell");
}

inline FidelityCurve constant_curve(double f) {
  qlink::detail::require_probability(f, "fidelity");
  return FidelityCurve([=](int) { return f; }, FidelityCurve::Kind::ClosedForm, "constant");
}

// f_m = values[m]; memory times past the end of the table are an error.
inline FidelityCurve tabulated_curve(std::vector<double> values) {
  if (values.empty()) throw ParameterError("fidelity table must be nonempty");
  for (double v : values) qlink::detail::require_probability(v, "tabulated fidelity");
  return FidelityCurve(
      [values = std::move(values)](int m) {
        if (static_cast<std::size_t>(m) >= values.size()) {
          throw ParameterError("memory time beyond the fidelity table");
        }
        return values[static_cast<std::size_t>(m)];
      },
      FidelityCurve::Kind::ClosedForm, "tabulated");
}

}  // namespace qlink::quantum
