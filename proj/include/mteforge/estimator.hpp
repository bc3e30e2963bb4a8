#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mteforge/corpus.hpp"

namespace mteforge::estimator {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Embeddings

// id -> float32 vector, all of length dim.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }

  // Throws DimMismatch, DuplicateId.
  void add(const std::string& id, std::vector<float> values);
  // Throws MissingEmbedding.
  const std::vector<float>& at(const std::string& id) const;
  Vector vector(const std::string& id) const;

  const std::map<std::string, std::vector<float>>& entries() const {
    return entries_;
  }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<float>> entries_;
};

// "EMB v1 <dim> <count>\n" then per entry: u16 LE id length, UTF-8 id,
// dim float32 LE values. Entries are written in id order.
// Throws BadHeader, DimMismatch, DuplicateId.
EmbeddingTable load_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(std::ostream& out, const EmbeddingTable& table);
void save_embeddings(const std::filesystem::path& path,
                     const EmbeddingTable& table);

// Deterministic stand-in for a sentence encoder: seeded hash of the text,
// components in [-1,1], unit L2 norm.
std::vector<float> pseudo_embed(std::string_view text, std::size_t dim,
                                std::uint64_t seed);

enum class Segment { Source, Translation, Reference };

// Embedding ids of a record's segments: "<record_id>/src", "/mt", "/ref".
std::string segment_id(std::string_view record_id, Segment segment);

// Pseudo-embeds every segment of every record.
EmbeddingTable pseudo_embed_records(
    const std::vector<corpus::AnnotationRecord>& records, std::size_t dim,
    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Features

enum class ViewKind { SrcMt, MtRef, SrcMtRef };
inline constexpr ViewKind kAllViews[] = {ViewKind::SrcMt, ViewKind::MtRef,
                                         ViewKind::SrcMtRef};
std::string_view to_string(ViewKind v);

enum class Mode { STL, MTL, QE };
std::string_view to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

// Views a mode trains and predicts on.
std::vector<ViewKind> views_for(Mode mode);

inline constexpr std::size_t kFeatureBlocks = 7;

// [mt; ref; src; mt*ref; mt*src; |mt-ref|; |mt-src|]. Blocks derived from a
// segment the view leaves out are zero. Throws MissingReference when the
// view needs `ref`, ShapeMismatch on length disagreement.
Vector build_features(ViewKind view, const Vector& src, const Vector& mt,
                      const std::optional<Vector>& ref);

// ---------------------------------------------------------------------------
// Regressor

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const DenseLayer& o) const {
    return weight.rows() == o.weight.rows() &&
           weight.cols() == o.weight.cols() && bias.size() == o.bias.size() &&
           weight == o.weight && bias == o.bias;
  }
};

// tanh hidden layers followed by a linear scalar output. No hidden layers
// gives a plain linear model.
struct RegressorParams {
  std::vector<DenseLayer> layers;

  // Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights
  // and biases.
  static RegressorParams init(std::size_t input_dim,
                              const std::vector<std::size_t>& hidden,
                              std::uint64_t seed);
  static RegressorParams zeros_like(const RegressorParams& shape);

  std::size_t input_dim() const;
  std::vector<std::size_t> hidden_widths() const;
  std::size_t num_parameters() const;

  // Flattened in layer order: weight (row-major) then bias.
  Vector flatten() const;
  void assign(const Vector& flat);

  bool operator==(const RegressorParams&) const = default;
};

// Throws ShapeMismatch.
double forward(const RegressorParams& params, const Vector& features);
// One column per input.
Vector forward_batch(const RegressorParams& params, const Matrix& features);

struct TrainingExample {
  std::string id;
  std::vector<Vector> views;  // one per view of the training mode
  double label = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  RegressorParams grad;
};

// Mean over examples of the mean over views of (forward - label)^2, and its
// gradient by reverse accumulation. Throws ShapeMismatch, InvalidArgument
// (label outside [0,1]).
LossGrad loss_and_grad(const RegressorParams& params,
                       const std::vector<TrainingExample>& batch);
double loss_only(const RegressorParams& params,
                 const std::vector<TrainingExample>& batch);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t grad_accumulation = 2;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Mode mode = Mode::STL;
  std::vector<std::size_t> hidden = {256, 128};

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  RegressorParams params;
  std::vector<double> epoch_loss;  // mean micro-batch loss per epoch
  std::size_t updates = 0;
};

// Adam with gradient accumulation over grad_accumulation micro-batches; the
// final partial accumulation of an epoch is flushed as its own update.
// Deterministic under the seed.
TrainResult train(const std::vector<TrainingExample>& examples,
                  const TrainConfig& config);

// Builds examples for `mode` from records and embeddings. Throws
// MissingEmbedding, MissingLabel (no scaled_score), MissingReference.
std::vector<TrainingExample> make_examples(
    const std::vector<corpus::AnnotationRecord>& records,
    const EmbeddingTable& table, Mode mode);

TrainResult train(const std::vector<corpus::AnnotationRecord>& records,
                  const EmbeddingTable& table, const TrainConfig& config);

// Raw (unclipped) prediction. STL: SrcMtRef; QE: SrcMt; MTL: mean of the
// three views summed in SrcMt, MtRef, SrcMtRef order.
double predict(const RegressorParams& params, Mode mode, const Vector& src,
               const Vector& mt, const std::optional<Vector>& ref);

// Report-time score in [0,1].
double clip_score(double raw);

// Scores records; ids map to clipped predictions.
std::map<std::string, double> score_records(
    const RegressorParams& params, Mode mode,
    const std::vector<corpus::AnnotationRecord>& records,
    const EmbeddingTable& table);

nlohmann::json params_to_json(const RegressorParams& params);
RegressorParams params_from_json(const nlohmann::json& j);

}  // namespace mteforge::estimator
