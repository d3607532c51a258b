#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "presca/concepts.hpp"
#include "presca/gridworld.hpp"

namespace presca {

enum class InputMode { encoding, image };
enum class LossReduction { sum, mean };
/// dense: every hidden unit sees the whole input. cellwise: hidden units are
/// shared across grid cells (a 1x1 convolution), sum-pooled, with the
/// non-spatial tail (inventory) wired straight to the output.
enum class Architecture { dense, cellwise };
std::string_view architecture_name(Architecture a);

struct TrainConfig {
  int epochs = 600;
  double learning_rate = 0.008;
  int hidden = 16;
  Architecture architecture = Architecture::cellwise;
  int batch_size = 32;
  /// Training loss must fall below this (under `reduction`) or the network is
  /// reinitialised.
  double loss_threshold = 1.0;
  LossReduction reduction = LossReduction::sum;
  int max_reinits = 5;
  InputMode input = InputMode::encoding;
};

/// One leaky-ReLU hidden layer, a single logit output. With cells > 0 the first
/// cells*channels inputs are a grid whose cells share the hidden weights, and
/// the remaining inputs feed the output through `skip`.
struct Mlp {
  int inputs = 0;
  int hidden = 0;
  int cells = 0;
  int channels = 0;
  std::vector<double> w1;  // hidden x inputs, or hidden x channels when cellwise
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> skip;
  double b2 = 0.0;

  static Mlp zeros(int inputs, int hidden);
  static Mlp zeros_cellwise(int cells, int channels, int tail, int hidden);
  static Mlp random(int inputs, int hidden, std::mt19937_64& rng);
  static Mlp random_cellwise(int cells, int channels, int tail, int hidden, std::mt19937_64& rng);
  bool cellwise() const { return cells > 0; }
  int fan_in() const { return cellwise() ? channels : inputs; }
  /// Same shape, all zeros.
  Mlp zeros_like() const;
  double logit(std::span<const double> x) const;
  /// Flat view of every parameter, for finite-difference checks.
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + skip.size() + 1; }
  double& parameter(std::size_t i);
};

struct Example {
  std::vector<double> x;
  int label = 0;
};

/// Summed binary cross-entropy over `batch`. Accumulates d(loss)/d(params)
/// into `grad` when non-null (grad must be shaped like `net`).
double cross_entropy(const Mlp& net, std::span<const Example> batch, Mlp* grad = nullptr);

struct TrainingMetadata {
  int epochs = 0;
  double final_loss = 0.0;
  double loss_threshold = 0.0;
  LossReduction reduction = LossReduction::sum;
  int reinits = 0;
  bool threshold_met = false;
  int positives = 0;
  int negatives = 0;
};

std::vector<double> featurize(const State& state, InputMode mode);
int feature_length(int width, int height, InputMode mode);
/// (cells, channels) of the spatial prefix of a feature vector.
std::pair<int, int> grid_layout(int width, int height, InputMode mode);

class ConceptClassifier {
 public:
  ConceptClassifier(ConceptId concept_id, InputMode input, int width, int height, Mlp net, TrainingMetadata meta)
      : concept_(concept_id), input_(input), width_(width), height_(height), net_(std::move(net)), meta_(meta) {}

  ConceptId concept_id() const { return concept_; }
  InputMode input() const { return input_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Mlp& net() const { return net_; }
  const TrainingMetadata& metadata() const { return meta_; }

  double probability(const State& state) const;
  bool predict(const State& state) const { return probability(state) >= 0.5; }

 private:
  ConceptId concept_;
  InputMode input_;
  int width_;
  int height_;
  Mlp net_;
  TrainingMetadata meta_;
};

using ClassifierPtr = std::shared_ptr<const ConceptClassifier>;

/// While alive, every classifier prediction on this thread throws. Lets tests
/// prove that a code path never consults a learned model.
class PredictionBlocker {
 public:
  PredictionBlocker();
  ~PredictionBlocker();
  PredictionBlocker(const PredictionBlocker&) = delete;
  PredictionBlocker& operator=(const PredictionBlocker&) = delete;
  static bool active();

 private:
  bool previous_;
};

/// Mini-batch SGD on cross-entropy with reinitialisation until the training
/// loss beats the threshold. After max_reinits the lowest-loss network is
/// returned with threshold_met = false. Throws EmptyClassError or
/// NonFiniteLossError.
ConceptClassifier train_classifier(ConceptId concept_id, const std::vector<State>& positives,
                                   const std::vector<State>& negatives, const TrainConfig& cfg, std::mt19937_64& rng);

struct AccuracyReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t count = 0;
  /// No true positives exist; recall reported as 1.
  bool zero_positive = false;
  /// Nothing predicted positive; precision reported as 1.
  bool zero_predicted = false;
};

AccuracyReport evaluate_accuracy(const std::vector<std::pair<bool, bool>>& predicted_vs_truth);
AccuracyReport evaluate_accuracy(const ConceptClassifier& clf, const std::vector<std::pair<State, bool>>& labeled);

std::string classifier_to_text(const ConceptClassifier& clf);
ConceptClassifier classifier_from_text(const std::string& text);
void save_classifier(const std::string& path, const ConceptClassifier& clf);
ConceptClassifier load_classifier(const std::string& path);

}  // namespace presca
