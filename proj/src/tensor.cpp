#include "eagle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eagle/error.hpp"

namespace eagle {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::HeadDivisibility: return "HeadDivisibility";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NoEvents: return "NoEvents";
    case ErrorCode::AllMissingFeature: return "AllMissingFeature";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NoEventsInBatch: return "NoEventsInBatch";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::AllZeroEncodings: return "AllZeroEncodings";
    case ErrorCode::ZeroTotalScore: return "ZeroTotalScore";
    case ErrorCode::InvalidSteps: return "InvalidSteps";
    case ErrorCode::NoComparablePairs: return "NoComparablePairs";
    case ErrorCode::TooFewPatients: return "TooFewPatients";
    case ErrorCode::DegenerateGroups: return "DegenerateGroups";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_)
    if (e == 0) fail(ErrorCode::ShapeMismatch, "zero extent in shape " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) fail(ErrorCode::ShapeMismatch, "zero extent in shape " + shape_str(shape_));
  if (data_.size() != shape_size(shape_))
    fail(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::EmptyInput, "empty vector");
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> data;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) fail(ErrorCode::ShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.size() < 2) return 1;
  return data_.size() / shape_.back();
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

double Tensor::item() const {
  if (data_.size() != 1) fail(ErrorCode::NonScalarLoss, "item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other))
    fail(ErrorCode::ShapeMismatch, shape_str(shape_) + " += " + shape_str(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    fail(ErrorCode::ShapeMismatch, "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      double* orow = o.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) fail(ErrorCode::ShapeMismatch, "transpose needs a matrix, got " + shape_str(a.shape()));
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) fail(ErrorCode::EmptyInput, "logsumexp of empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) fail(ErrorCode::NonFinite, what + " contains NaN or Inf");
}

}  // namespace eagle
