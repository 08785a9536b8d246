#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedpart/tensor.hpp"

namespace fedpart {

struct Dataset;

enum class LayerKind { Dense, Relu, Conv1d, Flatten };

// One layer of a sequential model. DENSE uses (in, out); CONV1D uses
// (in = in_channels, out = out_channels, kernel). Convolutions are stride 1
// with valid padding.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;

  static LayerSpec dense(std::size_t in_dim, std::size_t out_dim) {
    return {LayerKind::Dense, in_dim, out_dim, 0};
  }
  static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0}; }
  static LayerSpec conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_len) {
    return {LayerKind::Conv1d, in_channels, out_channels, kernel_len};
  }
  static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 0}; }

  std::size_t param_count() const;
  std::size_t fan_in() const;
  bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv1d; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string to_string(const LayerSpec& layer);

// Sequential model description. `input_shape` is the per-sample view of a
// feature row: {n} for a flat vector or {channels, length} for a signal.
// A flat {n} input feeding a CONV1D is read as {1, n}.
// Layers at index >= specific_from form the specific (private) segment.
struct ModelSpec {
  std::vector<std::size_t> input_shape;
  std::vector<LayerSpec> layers;
  std::size_t specific_from = 0;
  std::size_t num_classes = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Throws DimensionMismatch(layer), BadBoundary or BadHead.
void validate_spec(const ModelSpec& spec);

// Per-sample activation shape after each layer; element 0 is the input.
std::vector<std::vector<std::size_t>> activation_shapes(const ModelSpec& spec);

struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

// Contiguous half-open range [offset, offset + length) of a parameter vector.
struct SliceRange {
  std::size_t offset = 0;
  std::size_t length = 0;

  std::size_t end() const { return offset + length; }
  friend bool operator==(const SliceRange&, const SliceRange&) = default;
};

// Flat parameter vector with per-layer segments. values[0, boundary) are the
// generic parameters, values[boundary, end) the specific ones.
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(std::vector<double> values, std::vector<Segment> segments, std::size_t boundary);

  // Zero-valued parameters laid out for `spec`.
  static ParamSet zeros(const ModelSpec& spec);

  std::span<const double> values() const { return values_; }
  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t boundary() const { return boundary_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> generic() const { return std::span(values_).first(boundary_); }
  std::span<const double> specific() const { return std::span(values_).subspan(boundary_); }
  std::span<const double> slice(SliceRange range) const {
    return std::span(values_).subspan(range.offset, range.length);
  }

  SliceRange generic_range() const { return {0, boundary_}; }
  SliceRange specific_range() const { return {boundary_, values_.size() - boundary_}; }

  // New ParamSet with `range` overwritten by `replacement`.
  ParamSet with_slice(SliceRange range, std::span<const double> replacement) const;
  ParamSet with_values(std::vector<double> values) const;

  bool same_layout(const ParamSet& other) const {
    return segments_ == other.segments_ && boundary_ == other.boundary_;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
  std::size_t boundary_ = 0;
};

struct Gradients {
  std::vector<double> values;
};

struct Batch {
  Tensor inputs;
  std::vector<std::size_t> labels;
};

// activations[0] is the batch input; activations[i + 1] the output of layer i.
struct ForwardCache {
  std::vector<std::vector<double>> activations;
};

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Segment selector for sgd_step.
enum class UpdateMask { All, GenericOnly, SpecificOnly };

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed);

ForwardResult forward(const ModelSpec& spec, const ParamSet& params, const Batch& batch);

// Mean softmax cross-entropy and its gradient by backpropagation.
LossAndGrad loss_and_grad(const ModelSpec& spec, const ParamSet& params, const Batch& batch);

ParamSet sgd_step(const ParamSet& params, const Gradients& grads, double lr,
                  UpdateMask mask = UpdateMask::All);

// Accuracy with argmax ties going to the lowest class index, plus mean loss.
EvalResult evaluate(const ModelSpec& spec, const ParamSet& params, const Dataset& dataset);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares `analytic` against central differences of the batch loss.
GradCheckReport gradient_check(const ModelSpec& spec, const ParamSet& params, const Batch& batch,
                               const Gradients& analytic, double eps = 1e-5);

}  // namespace fedpart
