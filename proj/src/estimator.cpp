#include "mteforge/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mteforge/random.hpp"

namespace mteforge::estimator {

std::string_view to_string(ViewKind v) {
  switch (v) {
    case ViewKind::SrcMt:
      return "src-mt";
    case ViewKind::MtRef:
      return "mt-ref";
    case ViewKind::SrcMtRef:
      return "src-mt-ref";
  }
  return "?";
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::STL:
      return "stl";
    case Mode::MTL:
      return "mtl";
    case Mode::QE:
      return "qe";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (auto m : {Mode::STL, Mode::MTL, Mode::QE}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::vector<ViewKind> views_for(Mode mode) {
  switch (mode) {
    case Mode::STL:
      return {ViewKind::SrcMtRef};
    case Mode::QE:
      return {ViewKind::SrcMt};
    case Mode::MTL:
      return {std::begin(kAllViews), std::end(kAllViews)};
  }
  return {};
}

Vector build_features(ViewKind view, const Vector& src, const Vector& mt,
                      const std::optional<Vector>& ref) {
  const bool use_src = view != ViewKind::MtRef;
  const bool use_ref = view != ViewKind::SrcMt;
  if (use_ref && !ref) {
    throw MissingReference(std::string("view ") + std::string(to_string(view)) +
                           " needs a reference embedding");
  }
  const Eigen::Index d = mt.size();
  if (src.size() != d || (ref && ref->size() != d)) {
    throw ShapeMismatch("segment embeddings differ in dimension");
  }
  Vector f = Vector::Zero(static_cast<Eigen::Index>(kFeatureBlocks) * d);
  f.segment(0, d) = mt;
  if (use_ref) {
    f.segment(1 * d, d) = *ref;
    f.segment(3 * d, d) = mt.cwiseProduct(*ref);
    f.segment(5 * d, d) = (mt - *ref).cwiseAbs();
  }
  if (use_src) {
    f.segment(2 * d, d) = src;
    f.segment(4 * d, d) = mt.cwiseProduct(src);
    f.segment(6 * d, d) = (mt - src).cwiseAbs();
  }
  return f;
}

// ---------------------------------------------------------------------------

RegressorParams RegressorParams::init(std::size_t input_dim,
                                      const std::vector<std::size_t>& hidden,
                                      std::uint64_t seed) {
  if (input_dim == 0) throw InvalidArgument("input dimension must be positive");
  Rng rng(mix64(seed));
  RegressorParams p;
  std::size_t fan_in = input_dim;
  auto widths = hidden;
  widths.push_back(1);
  for (std::size_t width : widths) {
    if (width == 0) throw InvalidArgument("layer width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Matrix(width, fan_in), Vector(width)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      layer.bias[r] = rng.uniform(-bound, bound);
    }
    p.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return p;
}

RegressorParams RegressorParams::zeros_like(const RegressorParams& shape) {
  RegressorParams p;
  for (const auto& l : shape.layers) {
    p.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                        Vector::Zero(l.bias.size())});
  }
  return p;
}

std::size_t RegressorParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::vector<std::size_t> RegressorParams::hidden_widths() const {
  std::vector<std::size_t> w;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    w.push_back(static_cast<std::size_t>(layers[i].weight.rows()));
  }
  return w;
}

std::size_t RegressorParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }
  return n;
}

Vector RegressorParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat[k++] = l.weight(r, c);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat[k++] = l.bias[r];
  }
  return flat;
}

void RegressorParams::assign(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != num_parameters()) {
    throw ShapeMismatch("flat parameter vector has wrong length");
  }
  Eigen::Index k = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
  }
}

namespace {

void check_input(const RegressorParams& params, Eigen::Index rows) {
  if (params.layers.empty()) throw ShapeMismatch("regressor has no layers");
  if (params.layers.back().weight.rows() != 1) {
    throw ShapeMismatch("regressor output layer must be scalar");
  }
  if (params.layers.front().weight.cols() != rows) {
    throw ShapeMismatch("features have length " + std::to_string(rows) +
                        ", regressor expects " +
                        std::to_string(params.layers.front().weight.cols()));
  }
}

// Activations of every layer input, output last.
std::vector<Matrix> forward_trace(const RegressorParams& params,
                                  const Matrix& x) {
  check_input(params, x.rows());
  std::vector<Matrix> acts;
  acts.reserve(params.layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix z = layer.weight * acts.back();
    z.colwise() += layer.bias;
    if (l + 1 < params.layers.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

struct FlatBatch {
  Matrix x;
  Vector y;
  Vector w;
};

FlatBatch flatten_batch(const std::vector<TrainingExample>& batch,
                        Eigen::Index input_dim) {
  Eigen::Index cols = 0;
  for (const auto& ex : batch) {
    if (ex.views.empty()) throw ShapeMismatch("example '" + ex.id + "' has no views");
    if (!(ex.label >= 0.0 && ex.label <= 1.0)) {
      throw InvalidArgument("label of '" + ex.id + "' outside [0,1]");
    }
    cols += static_cast<Eigen::Index>(ex.views.size());
  }
  FlatBatch fb{Matrix(input_dim, cols), Vector(cols), Vector(cols)};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  Eigen::Index c = 0;
  for (const auto& ex : batch) {
    const double wv = inv_batch / static_cast<double>(ex.views.size());
    for (const auto& v : ex.views) {
      if (v.size() != input_dim) {
        throw ShapeMismatch("features of '" + ex.id + "' have length " +
                            std::to_string(v.size()));
      }
      fb.x.col(c) = v;
      fb.y[c] = ex.label;
      fb.w[c] = wv;
      ++c;
    }
  }
  return fb;
}

}  // namespace

Vector forward_batch(const RegressorParams& params, const Matrix& features) {
  auto acts = forward_trace(params, features);
  return acts.back().row(0).transpose();
}

double forward(const RegressorParams& params, const Vector& features) {
  return forward_batch(params, features)[0];
}

double loss_only(const RegressorParams& params,
                 const std::vector<TrainingExample>& batch) {
  if (batch.empty()) throw EmptyInput("empty batch");
  const auto fb = flatten_batch(batch, params.layers.empty()
                                           ? 0
                                           : params.layers.front().weight.cols());
  const Vector out = forward_batch(params, fb.x);
  return (fb.w.array() * (out - fb.y).array().square()).sum();
}

LossGrad loss_and_grad(const RegressorParams& params,
                       const std::vector<TrainingExample>& batch) {
  if (batch.empty()) throw EmptyInput("empty batch");
  if (params.layers.empty()) throw ShapeMismatch("regressor has no layers");
  const auto fb = flatten_batch(batch, params.layers.front().weight.cols());
  const auto acts = forward_trace(params, fb.x);
  const Eigen::RowVectorXd resid = acts.back().row(0) - fb.y.transpose();

  LossGrad out;
  out.loss = (fb.w.transpose().array() * resid.array().square()).sum();
  out.grad = RegressorParams::zeros_like(params);

  Matrix delta = (2.0 * fb.w.transpose().array() * resid.array()).matrix();
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Matrix& input = acts[l];
    out.grad.layers[l].weight.noalias() = delta * input.transpose();
    out.grad.layers[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = params.layers[l].weight.transpose() * delta;
      delta = (back.array() * (1.0 - input.array().square())).matrix();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"grad_accumulation", grad_accumulation},
          {"epochs", epochs},
          {"seed", seed},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"mode", std::string(to_string(mode))},
          {"hidden", hidden}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_accumulation = j.value("grad_accumulation", c.grad_accumulation);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    if (j.contains("mode")) {
      const auto m = parse_mode(j.at("mode").get<std::string>());
      if (!m) throw ConfigError("mode must be stl, mtl or qe");
      c.mode = *m;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  if (c.batch_size < 1 || c.grad_accumulation < 1) {
    throw ConfigError("batch_size and grad_accumulation must be >= 1");
  }
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  return c;
}

TrainResult train(const std::vector<TrainingExample>& examples,
                  const TrainConfig& config) {
  if (config.batch_size < 1 || config.grad_accumulation < 1) {
    throw InvalidArgument("batch_size and grad_accumulation must be >= 1");
  }
  if (examples.empty()) throw EmptyInput("no training examples");
  const auto input_dim = static_cast<std::size_t>(examples.front().views.at(0).size());

  TrainResult res;
  res.params = RegressorParams::init(input_dim, config.hidden, config.seed);
  Rng shuffle_rng(mix64(config.seed + 1));

  const auto n_params = static_cast<Eigen::Index>(res.params.num_parameters());
  Vector theta = res.params.flatten();
  Vector m1 = Vector::Zero(n_params);
  Vector m2 = Vector::Zero(n_params);
  Vector acc = Vector::Zero(n_params);
  std::size_t acc_count = 0;
  std::size_t step = 0;

  auto apply_update = [&] {
    const Vector g = acc / static_cast<double>(acc_count);
    ++step;
    m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
    m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    theta.array() -= config.learning_rate * (m1.array() / c1) /
                     ((m2.array() / c2).sqrt() + config.epsilon);
    res.params.assign(theta);
    acc.setZero();
    acc_count = 0;
  };

  std::vector<std::size_t> order(examples.size());
  std::vector<TrainingExample> micro;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      micro.clear();
      for (std::size_t i = start; i < stop; ++i) micro.push_back(examples[order[i]]);
      const auto lg = loss_and_grad(res.params, micro);
      loss_sum += lg.loss;
      ++batches;
      acc += lg.grad.flatten();
      if (++acc_count == config.grad_accumulation) apply_update();
    }
    if (acc_count > 0) apply_update();
    res.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  res.updates = step;
  return res;
}

std::vector<TrainingExample> make_examples(
    const std::vector<corpus::AnnotationRecord>& records,
    const EmbeddingTable& table, Mode mode) {
  const auto views = views_for(mode);
  std::vector<TrainingExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.scaled_score) {
      throw MissingLabel("record '" + r.record_id + "' has no scaled_score");
    }
    const Vector src = table.vector(segment_id(r.record_id, Segment::Source));
    const Vector mt = table.vector(segment_id(r.record_id, Segment::Translation));
    std::optional<Vector> ref;
    if (mode != Mode::QE) {
      r.require_reference();
      ref = table.vector(segment_id(r.record_id, Segment::Reference));
    }
    TrainingExample ex{r.record_id, {}, *r.scaled_score};
    for (auto v : views) ex.views.push_back(build_features(v, src, mt, ref));
    out.push_back(std::move(ex));
  }
  return out;
}

TrainResult train(const std::vector<corpus::AnnotationRecord>& records,
                  const EmbeddingTable& table, const TrainConfig& config) {
  return train(make_examples(records, table, config.mode), config);
}

double predict(const RegressorParams& params, Mode mode, const Vector& src,
               const Vector& mt, const std::optional<Vector>& ref) {
  if (mode != Mode::QE && !ref) {
    throw MissingReference(std::string(to_string(mode)) +
                           " prediction needs a reference");
  }
  if (mode == Mode::STL) {
    return forward(params, build_features(ViewKind::SrcMtRef, src, mt, ref));
  }
  if (mode == Mode::QE) {
    return forward(params, build_features(ViewKind::SrcMt, src, mt, std::nullopt));
  }
  double sum = 0.0;
  for (auto v : kAllViews) sum += forward(params, build_features(v, src, mt, ref));
  return sum / 3.0;
}

double clip_score(double raw) { return std::clamp(raw, 0.0, 1.0); }

std::map<std::string, double> score_records(
    const RegressorParams& params, Mode mode,
    const std::vector<corpus::AnnotationRecord>& records,
    const EmbeddingTable& table) {
  std::map<std::string, double> out;
  for (const auto& r : records) {
    const Vector src = table.vector(segment_id(r.record_id, Segment::Source));
    const Vector mt = table.vector(segment_id(r.record_id, Segment::Translation));
    std::optional<Vector> ref;
    if (mode != Mode::QE) {
      r.require_reference();
      ref = table.vector(segment_id(r.record_id, Segment::Reference));
    }
    out[r.record_id] = clip_score(predict(params, mode, src, mt, ref));
  }
  return out;
}

nlohmann::json params_to_json(const RegressorParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", std::move(w)},
                      {"bias", std::move(b)}});
  }
  return {{"format", "mteforge-regressor v1"},
          {"input_dim", params.input_dim()},
          {"hidden", params.hidden_widths()},
          {"activation", "tanh"},
          {"layers", std::move(layers)}};
}

RegressorParams params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mteforge-regressor v1") {
      throw ShapeMismatch("unknown parameter format");
    }
    RegressorParams p;
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      const auto w = lj.at("weight").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        throw ShapeMismatch("layer data does not match its declared shape");
      }
      DenseLayer layer{Matrix(rows, cols), Vector(rows)};
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[r * cols + c];
        layer.bias[r] = b[r];
      }
      if (!p.layers.empty() && p.layers.back().weight.rows() != cols) {
        throw ShapeMismatch("consecutive layers do not chain");
      }
      p.layers.push_back(std::move(layer));
    }
    if (p.layers.empty() || p.layers.back().weight.rows() != 1) {
      throw ShapeMismatch("regressor must end in a scalar output");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ShapeMismatch(std::string("malformed parameter file: ") + e.what());
  }
}

}  // namespace mteforge::estimator
