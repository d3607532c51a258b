#include "presca/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "presca/error.hpp"
#include "presca/rng.hpp"

namespace presca {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

std::uint64_t schema_hash(InputMode mode, int width, int height) {
  return splitmix64(static_cast<std::uint64_t>(mode) * 1000003ULL + static_cast<std::uint64_t>(width) * 1009ULL +
                    static_cast<std::uint64_t>(height) + 0x5eedULL);
}

}  // namespace

std::string_view architecture_name(Architecture a) { return a == Architecture::dense ? "dense" : "cellwise"; }

Mlp Mlp::zeros(int inputs, int hidden) {
  Mlp m;
  m.inputs = inputs;
  m.hidden = hidden;
  m.w1.assign(static_cast<std::size_t>(inputs * hidden), 0.0);
  m.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  m.w2.assign(static_cast<std::size_t>(hidden), 0.0);
  return m;
}

Mlp Mlp::zeros_cellwise(int cells, int channels, int tail, int hidden) {
  Mlp m;
  m.inputs = cells * channels + tail;
  m.hidden = hidden;
  m.cells = cells;
  m.channels = channels;
  m.w1.assign(static_cast<std::size_t>(channels * hidden), 0.0);
  m.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  m.w2.assign(static_cast<std::size_t>(hidden), 0.0);
  m.skip.assign(static_cast<std::size_t>(tail), 0.0);
  return m;
}

Mlp Mlp::zeros_like() const {
  return cellwise() ? zeros_cellwise(cells, channels, inputs - cells * channels, hidden) : zeros(inputs, hidden);
}

Mlp Mlp::random(int inputs, int hidden, std::mt19937_64& rng) {
  Mlp m = zeros(inputs, hidden);
  const double l1 = std::sqrt(6.0 / inputs);
  const double l2 = std::sqrt(6.0 / (hidden + 1));
  for (double& w : m.w1) w = (2.0 * uniform_real(rng) - 1.0) * l1;
  for (double& w : m.w2) w = (2.0 * uniform_real(rng) - 1.0) * l2;
  return m;
}

Mlp Mlp::random_cellwise(int cells, int channels, int tail, int hidden, std::mt19937_64& rng) {
  Mlp m = zeros_cellwise(cells, channels, tail, hidden);
  const double l1 = std::sqrt(6.0 / channels);
  // Pooling sums over every cell; scale the head down to match.
  const double l2 = std::sqrt(6.0 / (hidden + 1)) / std::sqrt(static_cast<double>(cells));
  for (double& w : m.w1) w = (2.0 * uniform_real(rng) - 1.0) * l1;
  for (double& w : m.w2) w = (2.0 * uniform_real(rng) - 1.0) * l2;
  for (double& w : m.skip) w = (2.0 * uniform_real(rng) - 1.0) * 0.5;
  return m;
}

double& Mlp::parameter(std::size_t i) {
  if (i < w1.size()) return w1[i];
  i -= w1.size();
  if (i < b1.size()) return b1[i];
  i -= b1.size();
  if (i < w2.size()) return w2[i];
  i -= w2.size();
  if (i < skip.size()) return skip[i];
  return b2;
}

namespace {

// Leaky units cannot all die, which plain ReLUs under sum pooling sometimes do.
constexpr double kLeak = 0.01;
double leaky(double a) { return a > 0 ? a : kLeak * a; }
double slope(double a) { return a > 0 ? 1.0 : kLeak; }

/// Logit; `act` receives the hidden activations (pooled over cells when cellwise).
double forward(const Mlp& net, std::span<const double> x, std::vector<double>& act) {
  double z = net.b2;
  act.assign(static_cast<std::size_t>(net.hidden), 0.0);
  if (!net.cellwise()) {
    for (int h = 0; h < net.hidden; ++h) {
      const double* row = &net.w1[static_cast<std::size_t>(h * net.inputs)];
      double a = net.b1[h];
      for (int i = 0; i < net.inputs; ++i) a += row[i] * x[i];
      act[h] = a;
      z += net.w2[h] * leaky(a);
    }
    return z;
  }
  for (int h = 0; h < net.hidden; ++h) {
    const double* row = &net.w1[static_cast<std::size_t>(h * net.channels)];
    double pooled = 0.0;
    for (int c = 0; c < net.cells; ++c) {
      const double* cell = &x[static_cast<std::size_t>(c * net.channels)];
      double a = net.b1[h];
      for (int k = 0; k < net.channels; ++k) a += row[k] * cell[k];
      pooled += leaky(a);
    }
    act[h] = pooled;
    z += net.w2[h] * pooled;
  }
  const std::size_t tail = static_cast<std::size_t>(net.cells * net.channels);
  for (std::size_t t = 0; t < net.skip.size(); ++t) z += net.skip[t] * x[tail + t];
  return z;
}

/// Adds dz * d(logit)/d(params) to `grad`.
void backward(const Mlp& net, std::span<const double> x, const std::vector<double>& act, double dz, Mlp& grad) {
  grad.b2 += dz;
  if (!net.cellwise()) {
    for (int h = 0; h < net.hidden; ++h) {
      grad.w2[h] += dz * leaky(act[h]);
      const double da = dz * net.w2[h] * slope(act[h]);
      grad.b1[h] += da;
      double* grow = &grad.w1[static_cast<std::size_t>(h * net.inputs)];
      for (int i = 0; i < net.inputs; ++i) {
        if (x[i] != 0.0) grow[i] += da * x[i];
      }
    }
    return;
  }
  for (int h = 0; h < net.hidden; ++h) {
    grad.w2[h] += dz * act[h];
    const double da = dz * net.w2[h];
    const double* row = &net.w1[static_cast<std::size_t>(h * net.channels)];
    double* grow = &grad.w1[static_cast<std::size_t>(h * net.channels)];
    for (int c = 0; c < net.cells; ++c) {
      const double* cell = &x[static_cast<std::size_t>(c * net.channels)];
      double a = net.b1[h];
      for (int k = 0; k < net.channels; ++k) a += row[k] * cell[k];
      const double d = da * slope(a);
      grad.b1[h] += d;
      for (int k = 0; k < net.channels; ++k) grow[k] += d * cell[k];
    }
  }
  const std::size_t tail = static_cast<std::size_t>(net.cells * net.channels);
  for (std::size_t t = 0; t < net.skip.size(); ++t) grad.skip[t] += dz * x[tail + t];
}

}  // namespace

double Mlp::logit(std::span<const double> x) const {
  std::vector<double> act;
  return forward(*this, x, act);
}

namespace {

template <typename Rows>
double cross_entropy_rows(const Mlp& net, const Rows& rows, Mlp* grad) {
  double loss = 0.0;
  std::vector<double> act;
  for (const Example* ex : rows) {
    const double z = forward(net, ex->x, act);
    // -[y log p + (1-y) log(1-p)] with p = sigmoid(z)
    loss += ex->label ? softplus(-z) : softplus(z);
    if (grad != nullptr) backward(net, ex->x, act, sigmoid(z) - ex->label, *grad);
  }
  return loss;
}

}  // namespace

double cross_entropy(const Mlp& net, std::span<const Example> batch, Mlp* grad) {
  std::vector<const Example*> rows;
  rows.reserve(batch.size());
  for (const auto& ex : batch) rows.push_back(&ex);
  return cross_entropy_rows(net, rows, grad);
}

std::vector<double> featurize(const State& state, InputMode mode) {
  if (mode == InputMode::encoding) return encode(state).flattened();
  const Image img = render(state);
  std::vector<double> out(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(), [](std::uint8_t v) { return v / 255.0; });
  return out;
}

int feature_length(int width, int height, InputMode mode) {
  return mode == InputMode::encoding ? encoding_length(width, height)
                                     : Image::kWidth * Image::kHeight * Image::kChannels;
}

std::pair<int, int> grid_layout(int width, int height, InputMode mode) {
  if (mode == InputMode::encoding) return {width * height, StateEncoding::kChannels};
  return {Image::kWidth * Image::kHeight, Image::kChannels};
}

namespace {
thread_local bool g_predictions_blocked = false;
}

PredictionBlocker::PredictionBlocker() : previous_(g_predictions_blocked) { g_predictions_blocked = true; }
PredictionBlocker::~PredictionBlocker() { g_predictions_blocked = previous_; }
bool PredictionBlocker::active() { return g_predictions_blocked; }

double ConceptClassifier::probability(const State& state) const {
  if (g_predictions_blocked) throw Error("classifier prediction while predictions are blocked");
  if (state.map->width != width_ || state.map->height != height_) {
    throw Error("classifier expects a " + std::to_string(width_) + "x" + std::to_string(height_) + " grid");
  }
  const auto x = featurize(state, input_);
  return sigmoid(net_.logit(x));
}

ConceptClassifier train_classifier(ConceptId concept_id, const std::vector<State>& positives,
                                   const std::vector<State>& negatives, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (positives.empty() || negatives.empty()) {
    throw EmptyClassError("training '" + std::string(concept_name(concept_id)) + "' needs both positive and negative examples");
  }
  if (cfg.epochs < 1 || cfg.loss_threshold <= 0 || cfg.batch_size < 1 || cfg.hidden < 1) {
    throw Error("invalid training configuration");
  }
  const int width = positives.front().map->width;
  const int height = positives.front().map->height;
  std::vector<Example> data;
  data.reserve(positives.size() + negatives.size());
  for (const auto& s : positives) data.push_back({featurize(s, cfg.input), 1});
  for (const auto& s : negatives) data.push_back({featurize(s, cfg.input), 0});
  const int inputs = static_cast<int>(data.front().x.size());
  const auto [cells, channels] = grid_layout(width, height, cfg.input);
  const int tail = inputs - cells * channels;
  const bool cellwise = cfg.architecture == Architecture::cellwise;
  const double scale = cfg.reduction == LossReduction::mean ? 1.0 / data.size() : 1.0;

  std::vector<std::size_t> order(data.size());
  std::vector<const Example*> batch;
  Mlp grad = cellwise ? Mlp::zeros_cellwise(cells, channels, tail, cfg.hidden) : Mlp::zeros(inputs, cfg.hidden);
  Mlp best;
  double best_loss = std::numeric_limits<double>::infinity();
  int attempts = 0;
  for (; attempts <= cfg.max_reinits; ++attempts) {
    Mlp net = cellwise ? Mlp::random_cellwise(cells, channels, tail, cfg.hidden, rng) : Mlp::random(inputs, cfg.hidden, rng);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
        for (std::size_t p = 0; p < grad.parameter_count(); ++p) grad.parameter(p) = 0.0;
        cross_entropy_rows(net, batch, &grad);
        // The batch loss is summed, like the threshold it is judged against.
        for (std::size_t p = 0; p < net.parameter_count(); ++p) net.parameter(p) -= cfg.learning_rate * grad.parameter(p);
      }
    }
    const double loss = cross_entropy(net, data) * scale;
    if (!std::isfinite(loss)) throw NonFiniteLossError("training loss diverged; lower the learning rate");
    if (loss < best_loss) {
      best_loss = loss;
      best = std::move(net);
    }
    if (best_loss < cfg.loss_threshold) break;
  }
  TrainingMetadata meta;
  meta.epochs = cfg.epochs;
  meta.final_loss = best_loss;
  meta.loss_threshold = cfg.loss_threshold;
  meta.reduction = cfg.reduction;
  meta.reinits = std::min(attempts, cfg.max_reinits);
  meta.threshold_met = best_loss < cfg.loss_threshold;
  meta.positives = static_cast<int>(positives.size());
  meta.negatives = static_cast<int>(negatives.size());
  return ConceptClassifier(concept_id, cfg.input, width, height, std::move(best), meta);
}

AccuracyReport evaluate_accuracy(const std::vector<std::pair<bool, bool>>& pairs) {
  AccuracyReport r;
  r.count = pairs.size();
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (auto [pred, truth] : pairs) {
    if (pred && truth) ++tp;
    else if (pred) ++fp;
    else if (truth) ++fn;
    else ++tn;
  }
  r.accuracy = r.count ? static_cast<double>(tp + tn) / r.count : 0.0;
  r.zero_positive = tp + fn == 0;
  r.zero_predicted = tp + fp == 0;
  r.recall = r.zero_positive ? 1.0 : static_cast<double>(tp) / (tp + fn);
  r.precision = r.zero_predicted ? 1.0 : static_cast<double>(tp) / (tp + fp);
  return r;
}

AccuracyReport evaluate_accuracy(const ConceptClassifier& clf, const std::vector<std::pair<State, bool>>& labeled) {
  std::vector<std::pair<bool, bool>> pairs;
  pairs.reserve(labeled.size());
  for (const auto& [s, truth] : labeled) pairs.emplace_back(clf.predict(s), truth);
  return evaluate_accuracy(pairs);
}

// -- persistence ---------------------------------------------------------------

namespace {

void write_row(std::ostream& os, const char* tag, const double* v, std::size_t n) {
  os << tag;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", v[i]);
    os << buf;
  }
  os << '\n';
}

std::vector<double> read_row(std::istream& in, const std::string& tag, std::size_t n) {
  std::string line;
  if (!std::getline(in, line)) throw Error("classifier file truncated before '" + tag + "'");
  std::istringstream ls(line);
  std::string got;
  ls >> got;
  if (got != tag) throw Error("classifier file: expected '" + tag + "', found '" + got + "'");
  std::vector<double> v(n);
  for (auto& x : v) {
    if (!(ls >> x)) throw Error("classifier file: short row '" + tag + "'");
  }
  return v;
}

}  // namespace

std::string classifier_to_text(const ConceptClassifier& clf) {
  std::ostringstream os;
  const Mlp& n = clf.net();
  const auto& m = clf.metadata();
  os << "presca-classifier 1\n";
  os << "concept " << concept_name(clf.concept_id()) << '\n';
  os << "input " << (clf.input() == InputMode::encoding ? "encoding" : "image") << '\n';
  os << "schema " << hex_hash(schema_hash(clf.input(), clf.width(), clf.height())) << '\n';
  os << "grid " << clf.width() << ' ' << clf.height() << '\n';
  os << "shape " << n.inputs << ' ' << n.hidden << '\n';
  os << "architecture " << (n.cellwise() ? "cellwise" : "dense") << ' ' << n.cells << ' ' << n.channels << '\n';
  char buf[256];
  std::snprintf(buf, sizeof buf, "meta epochs=%d final_loss=%.17g threshold=%.17g reduction=%s reinits=%d met=%d pos=%d neg=%d\n",
                m.epochs, m.final_loss, m.loss_threshold, m.reduction == LossReduction::sum ? "sum" : "mean",
                m.reinits, m.threshold_met ? 1 : 0, m.positives, m.negatives);
  os << buf;
  for (int h = 0; h < n.hidden; ++h) write_row(os, "w1", &n.w1[static_cast<std::size_t>(h * n.fan_in())], n.fan_in());
  write_row(os, "b1", n.b1.data(), n.b1.size());
  write_row(os, "w2", n.w2.data(), n.w2.size());
  if (n.cellwise()) write_row(os, "skip", n.skip.data(), n.skip.size());
  write_row(os, "b2", &n.b2, 1);
  return os.str();
}

ConceptClassifier classifier_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line, key, value;
  const auto expect = [&](const std::string& k) {
    if (!std::getline(in, line)) throw Error("classifier file truncated at '" + k + "'");
    std::istringstream ls(line);
    ls >> key;
    if (key != k) throw Error("classifier file: expected '" + k + "', found '" + key + "'");
    std::getline(ls >> std::ws, value);
    return value;
  };
  if (expect("presca-classifier") != "1") throw Error("unsupported classifier version");
  const ConceptId c = concept_from_name(expect("concept"));
  const std::string mode_text = expect("input");
  const InputMode mode = mode_text == "image" ? InputMode::image : InputMode::encoding;
  const std::string schema = expect("schema");
  int width = 0, height = 0, inputs = 0, hidden = 0;
  std::istringstream(expect("grid")) >> width >> height;
  std::istringstream(expect("shape")) >> inputs >> hidden;
  if (schema != hex_hash(schema_hash(mode, width, height))) throw Error("classifier encoding schema mismatch");
  if (inputs != feature_length(width, height, mode) || hidden < 1) throw Error("classifier shape mismatch");
  std::string arch;
  int cells = 0, channels = 0;
  std::istringstream(expect("architecture")) >> arch >> cells >> channels;
  if (arch != "dense" && arch != "cellwise") throw Error("classifier file: unknown architecture '" + arch + "'");
  if (arch == "cellwise" && std::pair(cells, channels) != grid_layout(width, height, mode)) {
    throw Error("classifier file: grid layout mismatch");
  }
  TrainingMetadata meta;
  {
    const std::string m = expect("meta");
    char reduction[8] = {};
    int met = 0;
    if (std::sscanf(m.c_str(), "epochs=%d final_loss=%lf threshold=%lf reduction=%7s reinits=%d met=%d pos=%d neg=%d",
                    &meta.epochs, &meta.final_loss, &meta.loss_threshold, reduction, &meta.reinits, &met,
                    &meta.positives, &meta.negatives) != 8) {
      throw Error("classifier file: malformed meta line");
    }
    meta.reduction = std::string(reduction) == "mean" ? LossReduction::mean : LossReduction::sum;
    meta.threshold_met = met != 0;
  }
  Mlp net = arch == "cellwise" ? Mlp::zeros_cellwise(cells, channels, inputs - cells * channels, hidden)
                               : Mlp::zeros(inputs, hidden);
  const int fan_in = net.fan_in();
  for (int h = 0; h < hidden; ++h) {
    const auto row = read_row(in, "w1", fan_in);
    std::copy(row.begin(), row.end(), net.w1.begin() + static_cast<std::ptrdiff_t>(h) * fan_in);
  }
  net.b1 = read_row(in, "b1", hidden);
  net.w2 = read_row(in, "w2", hidden);
  if (net.cellwise()) net.skip = read_row(in, "skip", net.skip.size());
  net.b2 = read_row(in, "b2", 1).front();
  return ConceptClassifier(c, mode, width, height, std::move(net), meta);
}

void save_classifier(const std::string& path, const ConceptClassifier& clf) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << classifier_to_text(clf);
}

ConceptClassifier load_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("classifier file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return classifier_from_text(ss.str());
}

}  // namespace presca
