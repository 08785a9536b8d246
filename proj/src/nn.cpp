#include "fedpart/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedpart/data.hpp"
#include "fedpart/numeric.hpp"

namespace fedpart {

std::size_t LayerSpec::param_count() const {
  switch (kind) {
    case LayerKind::Dense:
      return in * out + out;
    case LayerKind::Conv1d:
      return in * out * kernel + out;
    default:
      return 0;
  }
}

std::size_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::Dense:
      return in;
    case LayerKind::Conv1d:
      return in * kernel;
    default:
      return 0;
  }
}

std::string to_string(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::Dense:
      return "DENSE(" + std::to_string(layer.in) + "," + std::to_string(layer.out) + ")";
    case LayerKind::Conv1d:
      return "CONV1D(" + std::to_string(layer.in) + "," + std::to_string(layer.out) + "," +
             std::to_string(layer.kernel) + ")";
    case LayerKind::Relu:
      return "RELU";
    case LayerKind::Flatten:
      return "FLATTEN";
  }
  return "?";
}

namespace {

using Shape = std::vector<std::size_t>;

[[noreturn]] void dimension_mismatch(std::size_t layer, const std::string& what) {
  throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(layer) + ": " + what, layer);
}

Shape next_shape(const LayerSpec& layer, const Shape& in, std::size_t index) {
  switch (layer.kind) {
    case LayerKind::Dense:
      if (layer.in < 1 || layer.out < 1) dimension_mismatch(index, "dense dimensions must be >= 1");
      if (in.size() != 1 || in[0] != layer.in) {
        dimension_mismatch(index, "dense expects a flat input of " + std::to_string(layer.in));
      }
      return {layer.out};
    case LayerKind::Conv1d: {
      if (layer.in < 1 || layer.out < 1 || layer.kernel < 1) {
        dimension_mismatch(index, "conv1d sizes must be >= 1");
      }
      std::size_t channels = 0;
      std::size_t length = 0;
      if (in.size() == 1) {
        channels = 1;
        length = in[0];
      } else if (in.size() == 2) {
        channels = in[0];
        length = in[1];
      } else {
        dimension_mismatch(index, "conv1d expects a {channels, length} input");
      }
      if (channels != layer.in) dimension_mismatch(index, "conv1d channel count mismatch");
      if (length < layer.kernel) dimension_mismatch(index, "conv1d output length would be < 1");
      return {layer.out, length - layer.kernel + 1};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::Flatten:
      return {Tensor::element_count(in)};
  }
  return in;
}

}  // namespace

std::vector<std::vector<std::size_t>> activation_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty() || spec.input_shape.size() > 2 ||
      std::ranges::any_of(spec.input_shape, [](std::size_t d) { return d == 0; })) {
    throw Error(ErrorCode::DimensionMismatch, "input shape must be {n} or {channels, length}", 0);
  }
  std::vector<Shape> shapes{spec.input_shape};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    shapes.push_back(next_shape(spec.layers[i], shapes.back(), i));
  }
  return shapes;
}

void validate_spec(const ModelSpec& spec) {
  const auto shapes = activation_shapes(spec);
  if (spec.specific_from > spec.layers.size()) {
    throw Error(ErrorCode::BadBoundary, "specific_from is past the last layer");
  }
  if (spec.num_classes < 1 || spec.layers.empty() || spec.layers.back().kind != LayerKind::Dense ||
      spec.layers.back().out != spec.num_classes) {
    throw Error(ErrorCode::BadHead, "final layer must be DENSE with out_dim == num_classes");
  }
}

ParamSet::ParamSet(std::vector<double> values, std::vector<Segment> segments, std::size_t boundary)
    : values_(std::move(values)), segments_(std::move(segments)), boundary_(boundary) {
  std::size_t expected = 0;
  for (const auto& s : segments_) {
    if (s.offset != expected) throw Error(ErrorCode::LayoutMismatch, "segments are not contiguous");
    expected += s.length;
  }
  if (expected != values_.size()) {
    throw Error(ErrorCode::LayoutMismatch, "segments do not cover the value buffer");
  }
  if (boundary_ > values_.size()) throw Error(ErrorCode::BadBoundary, "boundary past the end");
}

ParamSet ParamSet::zeros(const ModelSpec& spec) {
  std::vector<Segment> segments;
  std::size_t offset = 0;
  std::size_t boundary = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (i == spec.specific_from) boundary = offset;
    const std::size_t n = spec.layers[i].param_count();
    segments.push_back({offset, n});
    offset += n;
  }
  if (spec.specific_from >= spec.layers.size()) boundary = offset;
  return ParamSet(std::vector<double>(offset, 0.0), std::move(segments), boundary);
}

ParamSet ParamSet::with_slice(SliceRange range, std::span<const double> replacement) const {
  if (range.end() > values_.size() || replacement.size() != range.length) {
    throw Error(ErrorCode::LayoutMismatch, "slice does not fit the parameter layout");
  }
  ParamSet out = *this;
  std::ranges::copy(replacement, out.values_.begin() + static_cast<std::ptrdiff_t>(range.offset));
  return out;
}

ParamSet ParamSet::with_values(std::vector<double> values) const {
  if (values.size() != values_.size()) {
    throw Error(ErrorCode::LengthMismatch, "value count does not match the layout");
  }
  return ParamSet(std::move(values), segments_, boundary_);
}

ParamSet init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  ParamSet zero = ParamSet::zeros(spec);
  std::vector<double> values(zero.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (!layer.has_params()) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
    const Segment seg = zero.segments()[i];
    const std::size_t weights = seg.length - layer.out;  // biases trail and stay zero
    for (std::size_t j = 0; j < weights; ++j) {
      values[seg.offset + j] = gauss(rng) * scale;
    }
  }
  return zero.with_values(std::move(values));
}

namespace {

struct Layout {
  std::vector<Shape> shapes;
  std::vector<std::size_t> sizes;  // per-sample element counts
};

Layout layout_for(const ModelSpec& spec) {
  Layout l;
  l.shapes = activation_shapes(spec);
  for (const auto& s : l.shapes) l.sizes.push_back(Tensor::element_count(s));
  return l;
}

std::size_t conv_length(const Shape& in) { return in.size() == 1 ? in[0] : in[1]; }

void check_batch(const ModelSpec& spec, const Layout& layout, const ParamSet& params,
                 const Batch& batch) {
  std::size_t expected = 0;
  for (const auto& layer : spec.layers) expected += layer.param_count();
  if (params.size() != expected || params.segments().size() != spec.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter count does not match the model");
  }
  if (batch.inputs.rows() == 0 || batch.inputs.row_size() != layout.sizes[0] ||
      batch.labels.size() != batch.inputs.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "batch does not match the model input");
  }
}

void layer_forward(const LayerSpec& layer, const Shape& in_shape, const Shape& out_shape,
                   std::span<const double> w, std::span<const double> x, std::span<double> y,
                   std::size_t batch) {
  const std::size_t in_size = Tensor::element_count(in_shape);
  const std::size_t out_size = Tensor::element_count(out_shape);
  switch (layer.kind) {
    case LayerKind::Dense: {
      const auto bias = w.subspan(layer.in * layer.out);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_size;
        double* yb = y.data() + b * out_size;
        for (std::size_t o = 0; o < layer.out; ++o) {
          const double* wo = w.data() + o * layer.in;
          double acc = bias[o];
          for (std::size_t i = 0; i < layer.in; ++i) acc += wo[i] * xb[i];
          yb[o] = acc;
        }
      }
      break;
    }
    case LayerKind::Conv1d: {
      const std::size_t len_in = conv_length(in_shape);
      const std::size_t len_out = out_shape[1];
      const std::size_t k = layer.kernel;
      const auto bias = w.subspan(layer.in * layer.out * k);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_size;
        double* yb = y.data() + b * out_size;
        for (std::size_t o = 0; o < layer.out; ++o) {
          for (std::size_t t = 0; t < len_out; ++t) {
            double acc = bias[o];
            for (std::size_t c = 0; c < layer.in; ++c) {
              const double* wk = w.data() + (o * layer.in + c) * k;
              const double* xc = xb + c * len_in + t;
              for (std::size_t j = 0; j < k; ++j) acc += wk[j] * xc[j];
            }
            yb[o * len_out + t] = acc;
          }
        }
      }
      break;
    }
    case LayerKind::Relu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case LayerKind::Flatten:
      std::ranges::copy(x, y.begin());
      break;
  }
}

// Accumulates parameter gradients into `gw` and writes the input gradient to
// `dx` (skipped when dx is empty).
void layer_backward(const LayerSpec& layer, const Shape& in_shape, const Shape& out_shape,
                    std::span<const double> w, std::span<const double> x,
                    std::span<const double> dy, std::span<double> gw, std::span<double> dx,
                    std::size_t batch) {
  const std::size_t in_size = Tensor::element_count(in_shape);
  const std::size_t out_size = Tensor::element_count(out_shape);
  switch (layer.kind) {
    case LayerKind::Dense: {
      const std::size_t bias_at = layer.in * layer.out;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_size;
        const double* dyb = dy.data() + b * out_size;
        for (std::size_t o = 0; o < layer.out; ++o) {
          const double g = dyb[o];
          double* gwo = gw.data() + o * layer.in;
          for (std::size_t i = 0; i < layer.in; ++i) gwo[i] += g * xb[i];
          gw[bias_at + o] += g;
        }
        if (!dx.empty()) {
          double* dxb = dx.data() + b * in_size;
          for (std::size_t i = 0; i < layer.in; ++i) dxb[i] = 0.0;
          for (std::size_t o = 0; o < layer.out; ++o) {
            const double g = dyb[o];
            const double* wo = w.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) dxb[i] += wo[i] * g;
          }
        }
      }
      break;
    }
    case LayerKind::Conv1d: {
      const std::size_t len_in = conv_length(in_shape);
      const std::size_t len_out = out_shape[1];
      const std::size_t k = layer.kernel;
      const std::size_t bias_at = layer.in * layer.out * k;
      if (!dx.empty()) std::ranges::fill(dx, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_size;
        const double* dyb = dy.data() + b * out_size;
        double* dxb = dx.empty() ? nullptr : dx.data() + b * in_size;
        for (std::size_t o = 0; o < layer.out; ++o) {
          for (std::size_t t = 0; t < len_out; ++t) {
            const double g = dyb[o * len_out + t];
            gw[bias_at + o] += g;
            for (std::size_t c = 0; c < layer.in; ++c) {
              const std::size_t wbase = (o * layer.in + c) * k;
              const double* xc = xb + c * len_in + t;
              for (std::size_t j = 0; j < k; ++j) gw[wbase + j] += g * xc[j];
              if (dxb != nullptr) {
                double* dxc = dxb + c * len_in + t;
                for (std::size_t j = 0; j < k; ++j) dxc[j] += w[wbase + j] * g;
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::Relu:
      if (!dx.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      }
      break;
    case LayerKind::Flatten:
      if (!dx.empty()) std::ranges::copy(dy, dx.begin());
      break;
  }
}

ForwardResult forward_with(const ModelSpec& spec, const Layout& layout, const ParamSet& params,
                           const Batch& batch) {
  const std::size_t b = batch.inputs.rows();
  ForwardCache cache;
  cache.activations.reserve(spec.layers.size() + 1);
  cache.activations.push_back(batch.inputs.data);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    std::vector<double> out(b * layout.sizes[i + 1]);
    const Segment seg = params.segments()[i];
    layer_forward(spec.layers[i], layout.shapes[i], layout.shapes[i + 1],
                  params.values().subspan(seg.offset, seg.length), cache.activations.back(), out, b);
    cache.activations.push_back(std::move(out));
  }
  Tensor logits({b, spec.num_classes}, cache.activations.back());
  return {std::move(logits), std::move(cache)};
}

// Per-sample softmax cross-entropy; writes softmax probabilities to `probs`
// when non-null.
double sample_loss(std::span<const double> z, std::size_t label, double* probs) {
  const double m = *std::ranges::max_element(z);
  double denom = 0.0;
  for (double v : z) denom += std::exp(v - m);
  if (probs != nullptr) {
    for (std::size_t c = 0; c < z.size(); ++c) probs[c] = std::exp(z[c] - m) / denom;
  }
  return m + std::log(denom) - z[label];
}

void check_labels(const Batch& batch, std::size_t num_classes) {
  for (std::size_t label : batch.labels) {
    if (label >= num_classes) throw Error(ErrorCode::ShapeMismatch, "label out of range");
  }
}

}  // namespace

ForwardResult forward(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  validate_spec(spec);
  const Layout layout = layout_for(spec);
  check_batch(spec, layout, params, batch);
  return forward_with(spec, layout, params, batch);
}

LossAndGrad loss_and_grad(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  validate_spec(spec);
  const Layout layout = layout_for(spec);
  check_batch(spec, layout, params, batch);
  check_labels(batch, spec.num_classes);

  const std::size_t b = batch.inputs.rows();
  const std::size_t classes = spec.num_classes;
  auto fwd = forward_with(spec, layout, params, batch);

  CompensatedSum total;
  std::vector<double> delta(b * classes);
  for (std::size_t s = 0; s < b; ++s) {
    double* p = delta.data() + s * classes;
    total.add(sample_loss(fwd.logits.row(s), batch.labels[s], p));
    p[batch.labels[s]] -= 1.0;
    for (std::size_t c = 0; c < classes; ++c) p[c] /= static_cast<double>(b);
  }

  Gradients grads{std::vector<double>(params.size(), 0.0)};
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const Segment seg = params.segments()[i];
    std::vector<double> dx;
    if (i > 0) dx.resize(b * layout.sizes[i]);
    layer_backward(spec.layers[i], layout.shapes[i], layout.shapes[i + 1],
                   params.values().subspan(seg.offset, seg.length), fwd.cache.activations[i], delta,
                   std::span(grads.values).subspan(seg.offset, seg.length), dx, b);
    delta = std::move(dx);
  }
  return {total.value() / static_cast<double>(b), std::move(grads)};
}

ParamSet sgd_step(const ParamSet& params, const Gradients& grads, double lr, UpdateMask mask) {
  if (grads.values.size() != params.size()) {
    throw Error(ErrorCode::LengthMismatch, "gradient length does not match parameters");
  }
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  SliceRange range{0, params.size()};
  if (mask == UpdateMask::GenericOnly) range = params.generic_range();
  if (mask == UpdateMask::SpecificOnly) range = params.specific_range();
  std::vector<double> values(params.values().begin(), params.values().end());
  for (std::size_t i = range.offset; i < range.end(); ++i) values[i] -= lr * grads.values[i];
  return params.with_values(std::move(values));
}

EvalResult evaluate(const ModelSpec& spec, const ParamSet& params, const Dataset& dataset) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "cannot evaluate on an empty dataset");
  validate_spec(spec);
  const Layout layout = layout_for(spec);
  constexpr std::size_t kChunk = 256;

  std::size_t correct = 0;
  CompensatedSum loss;
  const std::size_t n = dataset.size();
  const std::size_t row = dataset.feature_size();
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    Batch batch;
    batch.inputs = Tensor({count, row},
                          std::vector<double>(dataset.features.data.begin() +
                                                  static_cast<std::ptrdiff_t>(start * row),
                                              dataset.features.data.begin() +
                                                  static_cast<std::ptrdiff_t>((start + count) * row)));
    batch.labels.assign(dataset.labels.begin() + static_cast<std::ptrdiff_t>(start),
                        dataset.labels.begin() + static_cast<std::ptrdiff_t>(start + count));
    check_batch(spec, layout, params, batch);
    check_labels(batch, spec.num_classes);
    const auto fwd = forward_with(spec, layout, params, batch);
    for (std::size_t s = 0; s < count; ++s) {
      const auto z = fwd.logits.row(s);
      // max_element returns the first maximum, i.e. the lowest class index.
      const auto pred = static_cast<std::size_t>(std::ranges::max_element(z) - z.begin());
      if (pred == batch.labels[s]) ++correct;
      loss.add(sample_loss(z, batch.labels[s], nullptr));
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(n),
          loss.value() / static_cast<double>(n)};
}

namespace {

double batch_loss(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  const auto fwd = forward(spec, params, batch);
  CompensatedSum total;
  for (std::size_t s = 0; s < batch.labels.size(); ++s) {
    total.add(sample_loss(fwd.logits.row(s), batch.labels[s], nullptr));
  }
  return total.value() / static_cast<double>(batch.labels.size());
}

}  // namespace

GradCheckReport gradient_check(const ModelSpec& spec, const ParamSet& params, const Batch& batch,
                               const Gradients& analytic, double eps) {
  if (analytic.values.size() != params.size()) {
    throw Error(ErrorCode::LengthMismatch, "gradient length does not match parameters");
  }
  GradCheckReport report;
  std::vector<double> probe(params.values().begin(), params.values().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = batch_loss(spec, params.with_values(probe), batch);
    probe[i] = saved - eps;
    const double down = batch_loss(spec, params.with_values(probe), batch);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.values[i];
    // Floor keeps near-zero components from dividing by rounding noise.
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
    const double rel = std::fabs(a - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = i;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace fedpart
