// Finite-dimensional state vectors, operators, tensor products, exact
// propagators and projective measurements. Dense algebra is delegated to Eigen.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eventium/errors.hpp"

namespace eventium {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;

inline constexpr Complex kI{0.0, 1.0};

class StateVector {
 public:
  StateVector() = default;

  explicit StateVector(Vector amplitudes, std::vector<std::string> labels = {})
      : amps_(std::move(amplitudes)), labels_(std::move(labels)) {
    check_state_dim(static_cast<std::size_t>(amps_.size()), "StateVector");
    if (!labels_.empty() && labels_.size() != dim())
      throw ValidationError("StateVector: label count does not match dimension");
  }

  static StateVector basis(std::size_t dim, std::size_t index) {
    if (index >= dim) throw ValidationError("StateVector::basis: index out of range");
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return StateVector(std::move(v));
  }

  // The "no state" result of a measurement with zero amplitude.
  static StateVector null(std::size_t dim) {
    StateVector s(Vector::Zero(static_cast<Eigen::Index>(dim)));
    s.null_ = true;
    return s;
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(amps_.size()); }
  const Vector& amplitudes() const noexcept { return amps_; }
  Complex operator[](std::size_t i) const { return amps_(static_cast<Eigen::Index>(i)); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool is_null() const noexcept { return null_; }

  double norm() const { return amps_.norm(); }
  double squared_norm() const { return amps_.squaredNorm(); }
  bool is_normalized(double tol = 1e-12) const { return std::abs(norm() - 1.0) <= tol; }

  StateVector normalized() const {
    double n = norm();
    if (n == 0.0) throw ValidationError("StateVector::normalized: zero vector");
    return StateVector(amps_ / n, labels_);
  }

  // <this|other>
  Complex inner(const StateVector& other) const {
    if (other.dim() != dim()) throw ValidationError("StateVector::inner: dimension mismatch");
    return amps_.dot(other.amps_);
  }

  StateVector scaled(Complex c) const { return StateVector(amps_ * c, labels_); }

 private:
  Vector amps_;
  std::vector<std::string> labels_;
  bool null_ = false;
};

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

class OperatorMatrix {
 public:
  OperatorMatrix() = default;

  explicit OperatorMatrix(Matrix m) : m_(std::move(m)) {
    check_operator_dim(static_cast<std::size_t>(std::max(m_.rows(), m_.cols())), "OperatorMatrix");
  }

  static OperatorMatrix identity(std::size_t n) {
    return OperatorMatrix(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  }
  static OperatorMatrix zero(std::size_t rows, std::size_t cols) {
    return OperatorMatrix(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
  }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(m_.cols()); }
  bool is_square() const noexcept { return m_.rows() == m_.cols(); }
  const Matrix& matrix() const noexcept { return m_; }
  Complex operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  bool is_hermitian(double tol = 1e-12) const {
    return is_square() && max_abs(m_ - m_.adjoint()) <= tol * std::max(1.0, max_abs(m_));
  }
  bool is_unitary(double tol = 1e-10) const {
    return is_square() && max_abs(m_.adjoint() * m_ - Matrix::Identity(m_.rows(), m_.cols())) <= tol;
  }
  bool is_projector(double tol = 1e-10) const {
    return is_square() && max_abs(m_ * m_ - m_) <= tol && max_abs(m_ - m_.adjoint()) <= tol;
  }

  OperatorMatrix adjoint() const { return OperatorMatrix(m_.adjoint()); }

  friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.cols() != b.rows()) throw ValidationError("operator product: dimension mismatch");
    return OperatorMatrix(a.m_ * b.m_);
  }
  friend StateVector operator*(const OperatorMatrix& a, const StateVector& v) {
    if (a.cols() != v.dim()) throw ValidationError("operator on state: dimension mismatch");
    return StateVector(a.m_ * v.amplitudes());
  }
  friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("operator sum: dimension mismatch");
    return OperatorMatrix(a.m_ + b.m_);
  }
  friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("operator difference: dimension mismatch");
    return OperatorMatrix(a.m_ - b.m_);
  }
  friend OperatorMatrix operator*(Complex c, const OperatorMatrix& a) { return OperatorMatrix(c * a.m_); }

 private:
  Matrix m_;
};

// |a><b|
inline OperatorMatrix outer(const StateVector& a, const StateVector& b) {
  return OperatorMatrix(a.amplitudes() * b.amplitudes().adjoint());
}

inline OperatorMatrix projector_onto(const StateVector& v) { return outer(v, v); }

// First factor is the most significant index: (i_a, i_b) -> i_a * dim_b + i_b.
inline StateVector tensor_product(const StateVector& a, const StateVector& b) {
  std::size_t dim = checked_product(a.dim(), b.dim());
  check_state_dim(dim, "tensor_product");
  Vector out(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < a.dim(); ++i)
    out.segment(static_cast<Eigen::Index>(i * b.dim()), static_cast<Eigen::Index>(b.dim())) = a[i] * b.amplitudes();
  std::vector<std::string> labels;
  if (!a.labels().empty() && !b.labels().empty()) {
    for (const auto& la : a.labels())
      for (const auto& lb : b.labels()) labels.push_back(la + "," + lb);
  }
  return StateVector(std::move(out), std::move(labels));
}

inline OperatorMatrix tensor_product(const OperatorMatrix& a, const OperatorMatrix& b) {
  std::size_t rows = checked_product(a.rows(), b.rows());
  std::size_t cols = checked_product(a.cols(), b.cols());
  check_operator_dim(std::max(rows, cols), "tensor_product");
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const auto br = static_cast<Eigen::Index>(b.rows());
  const auto bc = static_cast<Eigen::Index>(b.cols());
  for (Eigen::Index i = 0; i < a.matrix().rows(); ++i)
    for (Eigen::Index j = 0; j < a.matrix().cols(); ++j) out.block(i * br, j * bc, br, bc) = a.matrix()(i, j) * b.matrix();
  return OperatorMatrix(std::move(out));
}

// Eigendecomposition of a hermitian generator, reused for exp(-i H t) at many t.
class HermitianSpectrum {
 public:
  explicit HermitianSpectrum(const OperatorMatrix& h) {
    if (!h.is_hermitian()) throw ValidationError("generator is not hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h.matrix());
    if (solver.info() != Eigen::Success) throw ValidationError("eigendecomposition failed");
    values_ = solver.eigenvalues();
    vectors_ = solver.eigenvectors();
  }

  const Eigen::VectorXd& eigenvalues() const noexcept { return values_; }
  const Matrix& eigenvectors() const noexcept { return vectors_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.size()); }

  OperatorMatrix evolution(double t) const {
    if (!std::isfinite(t)) throw ValidationError("propagator: non-finite time");
    Vector phases(values_.size());
    for (Eigen::Index i = 0; i < values_.size(); ++i) phases(i) = std::exp(-kI * (values_(i) * t));
    return OperatorMatrix(vectors_ * phases.asDiagonal() * vectors_.adjoint());
  }

  // exp(-i H t)|psi> without forming the matrix.
  Vector evolve(const Vector& psi, double t) const {
    Vector c = vectors_.adjoint() * psi;
    for (Eigen::Index i = 0; i < values_.size(); ++i) c(i) *= std::exp(-kI * (values_(i) * t));
    return vectors_ * c;
  }

 private:
  Eigen::VectorXd values_;
  Matrix vectors_;
};

// exp(-i H dt)
inline OperatorMatrix propagator(const OperatorMatrix& h, double dt) { return HermitianSpectrum(h).evolution(dt); }

// U(n dt) for n = 0..max_steps, each computed from the spectrum rather than by
// repeated multiplication.
class PropagatorTable {
 public:
  PropagatorTable(const OperatorMatrix& h, double dt, std::size_t max_steps) {
    HermitianSpectrum spectrum(h);
    table_.reserve(max_steps + 1);
    for (std::size_t n = 0; n <= max_steps; ++n) table_.push_back(spectrum.evolution(static_cast<double>(n) * dt));
  }

  const OperatorMatrix& steps(std::size_t n) const {
    if (n >= table_.size()) throw ValidationError("PropagatorTable: step count out of range");
    return table_[n];
  }
  std::size_t max_steps() const noexcept { return table_.size() - 1; }

 private:
  std::vector<OperatorMatrix> table_;
};

struct MeasurementResult {
  Complex amplitude;
  StateVector collapsed;
};

namespace detail {

inline constexpr double kNullTolerance = 1e-14;

// Orthonormal basis of the range of a projector; rank-1 vectors get the
// largest component made real and positive.
inline std::vector<StateVector> projector_range(const OperatorMatrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(p.matrix());
  std::vector<StateVector> out;
  for (Eigen::Index i = solver.eigenvalues().size(); i-- > 0;) {
    if (solver.eigenvalues()(i) < 0.5) break;
    Vector v = solver.eigenvectors().col(i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    v *= std::conj(v(arg)) / std::abs(v(arg));
    out.emplace_back(std::move(v));
  }
  return out;
}

inline MeasurementResult measure_with_range(const OperatorMatrix& p, const std::vector<StateVector>& range,
                                            const StateVector& psi) {
  if (range.size() == 1) {
    Complex amp = range.front().inner(psi);
    if (std::abs(amp) <= kNullTolerance * std::max(1.0, psi.norm())) return {Complex{0.0}, StateVector::null(psi.dim())};
    return {amp, range.front()};
  }
  Vector projected = p.matrix() * psi.amplitudes();
  double n = projected.norm();
  if (n <= kNullTolerance * std::max(1.0, psi.norm())) return {Complex{0.0}, StateVector::null(psi.dim())};
  return {Complex{n}, StateVector(projected / n)};
}

}  // namespace detail

// Rank 1: amplitude <v|psi> and collapsed state v. Higher rank: amplitude
// ||M psi|| and collapsed M psi / ||M psi||. Zero amplitude gives a null state.
inline MeasurementResult apply_measurement(const OperatorMatrix& projector, const StateVector& psi) {
  if (!projector.is_square() || projector.rows() != psi.dim())
    throw ValidationError("apply_measurement: dimension mismatch");
  if (!projector.is_projector()) throw ValidationError("apply_measurement: operator is not an orthogonal projector");
  return detail::measure_with_range(projector, detail::projector_range(projector), psi);
}

// A complete set of orthogonal projectors with labels.
class ProjectiveMeasurement {
 public:
  ProjectiveMeasurement() = default;

  static ProjectiveMeasurement from_vectors(std::vector<std::string> labels, const std::vector<StateVector>& vectors,
                                            double completeness_tol = 1e-9) {
    std::vector<OperatorMatrix> projectors;
    for (const auto& v : vectors) {
      if (!v.is_normalized(1e-9)) throw ValidationError("outcome vector is not normalized");
      projectors.push_back(projector_onto(v));
    }
    return from_projectors(std::move(labels), std::move(projectors), completeness_tol);
  }

  static ProjectiveMeasurement from_projectors(std::vector<std::string> labels, std::vector<OperatorMatrix> projectors,
                                               double completeness_tol = 1e-9) {
    if (labels.size() != projectors.size()) throw ValidationError("outcome labels and projectors differ in count");
    if (projectors.empty()) throw ValidationError("measurement needs at least one outcome");
    ProjectiveMeasurement m;
    const std::size_t dim = projectors.front().rows();
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < projectors.size(); ++i) {
      const auto& p = projectors[i];
      if (!p.is_square() || p.rows() != dim) throw ValidationError("outcome projectors differ in dimension");
      if (!p.is_projector()) throw ValidationError("outcome '" + labels[i] + "' is not an orthogonal projector");
      for (std::size_t j = 0; j < i; ++j)
        if (labels[j] == labels[i]) throw ValidationError("duplicate outcome label '" + labels[i] + "'");
      sum += p.matrix();
      auto range = detail::projector_range(p);
      if (range.empty()) throw ValidationError("outcome '" + labels[i] + "' has a zero projector");
      m.ranges_.push_back(std::move(range));
    }
    m.completeness_error_ = max_abs(sum - Matrix::Identity(sum.rows(), sum.cols()));
    if (m.completeness_error_ > completeness_tol) throw ValidationError("outcome projectors do not sum to identity");
    m.labels_ = std::move(labels);
    m.projectors_ = std::move(projectors);
    return m;
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return projectors_.empty() ? 0 : projectors_.front().rows(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const OperatorMatrix& projector(std::size_t i) const { return projectors_.at(i); }
  std::size_t rank(std::size_t i) const { return ranges_.at(i).size(); }
  double completeness_error() const noexcept { return completeness_error_; }

  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return i;
    throw ValidationError("unknown outcome label '" + label + "'");
  }

  // The defining vector of a rank-1 outcome.
  const StateVector& pointer(std::size_t i) const {
    if (rank(i) != 1) throw ValidationError("outcome '" + label(i) + "' is not rank one");
    return ranges_[i].front();
  }

  MeasurementResult apply(std::size_t i, const StateVector& psi) const {
    if (psi.dim() != dim()) throw ValidationError("measurement: dimension mismatch");
    return detail::measure_with_range(projectors_.at(i), ranges_[i], psi);
  }

  // Joint outcomes on the tensor product, labelled "a|b".
  ProjectiveMeasurement composite(const ProjectiveMeasurement& other) const {
    std::vector<std::string> labels;
    std::vector<OperatorMatrix> projectors;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < other.size(); ++j) {
        labels.push_back(labels_[i] + "|" + other.labels_[j]);
        projectors.push_back(tensor_product(projectors_[i], other.projectors_[j]));
      }
    return from_projectors(std::move(labels), std::move(projectors));
  }

 private:
  std::vector<std::string> labels_;
  std::vector<OperatorMatrix> projectors_;
  std::vector<std::vector<StateVector>> ranges_;
  double completeness_error_ = 0.0;
};

// Index arithmetic for a register product; first factor most significant.
class TensorLayout {
 public:
  explicit TensorLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)), strides_(dims_.size()) {
    std::size_t stride = 1;
    for (std::size_t f = dims_.size(); f-- > 0;) {
      if (dims_[f] == 0) throw ValidationError("TensorLayout: zero dimension");
      strides_[f] = stride;
      stride = checked_product(stride, dims_[f]);
    }
    size_ = stride;
    check_state_dim(size_, "TensorLayout");
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t factors() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t f) const { return dims_.at(f); }
  std::size_t stride(std::size_t f) const { return strides_.at(f); }

  std::size_t digit(std::size_t flat, std::size_t f) const { return (flat / strides_[f]) % dims_[f]; }

  std::size_t flat(std::span<const std::size_t> multi) const {
    std::size_t out = 0;
    for (std::size_t f = 0; f < dims_.size(); ++f) out += multi[f] * strides_[f];
    return out;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

// Digits of the untouched factors, as seen by a gate; entries of the acted-on
// factors are zero.
using LocalGate = std::function<bool(std::span<const std::size_t>)>;

// Applies `op` to the listed factors (in the listed order) of a vector laid out
// by `layout`, only on slices where `gate` holds.
inline void apply_local(const TensorLayout& layout, const std::vector<std::size_t>& factors, const Matrix& op,
                        Vector& psi, const LocalGate& gate = {}) {
  std::size_t sub = 1;
  std::vector<bool> acted(layout.factors(), false);
  for (auto f : factors) {
    if (f >= layout.factors() || acted[f]) throw ValidationError("apply_local: bad factor list");
    acted[f] = true;
    sub *= layout.dim(f);
  }
  if (static_cast<std::size_t>(op.rows()) != sub || static_cast<std::size_t>(op.cols()) != sub)
    throw ValidationError("apply_local: operator does not match factor dimensions");
  if (static_cast<std::size_t>(psi.size()) != layout.size()) throw ValidationError("apply_local: state size mismatch");

  std::vector<std::size_t> offsets(sub, 0);
  for (std::size_t j = 0; j < sub; ++j) {
    std::size_t rem = j;
    for (std::size_t i = factors.size(); i-- > 0;) {
      std::size_t f = factors[i];
      offsets[j] += (rem % layout.dim(f)) * layout.stride(f);
      rem /= layout.dim(f);
    }
  }
  std::vector<std::size_t> others;
  for (std::size_t f = 0; f < layout.factors(); ++f)
    if (!acted[f]) others.push_back(f);

  std::vector<std::size_t> digits(layout.factors(), 0);
  Vector x(static_cast<Eigen::Index>(sub));
  while (true) {
    if (!gate || gate(digits)) {
      std::size_t base = layout.flat(digits);
      for (std::size_t j = 0; j < sub; ++j) x(static_cast<Eigen::Index>(j)) = psi(static_cast<Eigen::Index>(base + offsets[j]));
      Vector y = op * x;
      for (std::size_t j = 0; j < sub; ++j) psi(static_cast<Eigen::Index>(base + offsets[j])) = y(static_cast<Eigen::Index>(j));
    }
    std::size_t i = others.size();
    while (i > 0) {
      std::size_t f = others[i - 1];
      if (++digits[f] < layout.dim(f)) break;
      digits[f] = 0;
      --i;
    }
    if (i == 0) break;
  }
}

}  // namespace eventium
