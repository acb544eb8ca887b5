#pragma once

// One-vs-rest linear probes on final-token activations: logistic loss, AdamW,
// cosine-annealed learning rate, early stopping on validation AUC.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tomdecomp/activation_store.hpp"
#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/core.hpp"
#include "tomdecomp/metrics.hpp"
#include "tomdecomp/optim.hpp"
#include "tomdecomp/reference.hpp"

namespace tomdecomp {

struct TrainConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t batch_size = 64;
  double negative_ratio = 1.0;
  std::uint64_t seed = 0;

  void check() const {
    if (!(lr_min > 0.0 && lr_min <= lr_max)) throw Error("probe", "need 0 < lr_min <= lr_max");
    if (patience < 1) throw Error("probe", "patience must be >= 1");
    if (!(negative_ratio > 0.0)) throw Error("probe", "negative_ratio must be > 0");
    if (max_epochs < 1 || batch_size < 1) throw Error("probe", "max_epochs and batch_size must be >= 1");
  }

  AdamWHyper hyper(double wd) const { return {beta1, beta2, epsilon, wd}; }
};

struct LinearProbe {
  std::string action;
  std::size_t layer = 0;
  Vector weights;
  double bias = 0.0;
  double val_auc = 0.0;
  double val_f1 = 0.0;
  std::size_t trained_epochs = 0;
  std::uint64_t seed = 0;

  bool operator==(const LinearProbe&) const = default;
};

inline double probe_logit(const LinearProbe& p, std::span<const double> x) { return dot(p.weights, x) + p.bias; }

/// Probe confidence: logistic(weights . activation + bias).
inline double predict(const LinearProbe& probe, std::span<const double> activation) {
  if (activation.size() != probe.weights.size())
    throw Error("probe", "predict: activation length " + std::to_string(activation.size()) + " != hidden_dim " +
                             std::to_string(probe.weights.size()));
  return sigmoid(probe_logit(probe, activation));
}

/// Mean binary cross-entropy of logistic(w . x + b) over the rows of `x`.
inline double logistic_loss(std::span<const double> w, double b, const Matrix& x, std::span<const double> y) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double z = dot(w, x.row(i)) + b;
    // log(1 + e^z) - y z, written to avoid overflow.
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += softplus - y[i] * z;
  }
  return loss / static_cast<double>(x.rows);
}

struct LossGrad {
  double loss = 0.0;
  Vector grad_w;
  double grad_b = 0.0;
};

/// Loss and analytic gradient over `rows` of `x` (all rows when empty).
inline LossGrad logistic_loss_grad(std::span<const double> w, double b, const Matrix& x, std::span<const double> y,
                                   std::span<const std::size_t> rows = {}) {
  LossGrad out{0.0, Vector(w.size(), 0.0), 0.0};
  const std::size_t n = rows.empty() ? x.rows : rows.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = rows.empty() ? k : rows[k];
    const auto xi = x.row(i);
    const double z = dot(w, xi) + b;
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    out.loss += softplus - y[i] * z;
    const double r = sigmoid(z) - y[i];
    for (std::size_t d = 0; d < w.size(); ++d) out.grad_w[d] += r * xi[d];
    out.grad_b += r;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  for (auto& g : out.grad_w) g *= inv;
  out.grad_b *= inv;
  return out;
}

/// Per-epoch validation AUC alongside the returned probe.
struct TrainTrace {
  LinearProbe probe;
  std::vector<double> val_auc_history;
  std::size_t best_epoch = 0;
};

namespace detail {

struct ProbeData {
  Matrix x;
  Vector y;
};

inline ProbeData gather(const ActivationDataset& ds, std::size_t layer, const std::vector<std::size_t>& pos,
                        const std::vector<std::size_t>& neg) {
  ProbeData out{Matrix(pos.size() + neg.size(), ds.hidden_dim), Vector(pos.size() + neg.size(), 0.0)};
  std::size_t r = 0;
  for (const auto* group : {&pos, &neg}) {
    for (std::size_t idx : *group) {
      const auto src = ds.records[idx].layer(layer, ds.hidden_dim);
      std::copy(src.begin(), src.end(), out.x.row(r).begin());
      out.y[r] = group == &pos ? 1.0 : 0.0;
      ++r;
    }
  }
  return out;
}

inline std::vector<std::size_t> sample_negatives(std::vector<std::size_t> pool, std::size_t n_pos, double ratio,
                                                 std::mt19937_64& rng) {
  const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_pos)));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(want, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

inline TrainTrace train_probe_traced(const ActivationDataset& ds, const std::string& action, std::size_t layer,
                                     const TrainConfig& config) {
  config.check();
  if (layer >= ds.n_layers)
    throw Error("probe", "layer " + std::to_string(layer) + " outside dataset depth " + std::to_string(ds.n_layers));

  std::vector<std::size_t> train_pos, train_pool, val_pos, val_pool;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    if (!r.label) continue;
    const bool positive = *r.label == action;
    if (r.split == Split::train) (positive ? train_pos : train_pool).push_back(i);
    if (r.split == Split::val) (positive ? val_pos : val_pool).push_back(i);
  }
  if (train_pos.empty() && val_pos.empty()) throw Error("probe", "action " + action + " absent from dataset");
  if (train_pos.empty()) throw Error("probe", "no training positives for " + action);
  if (val_pos.empty()) throw Error("probe", "no validation positives for " + action);

  std::mt19937_64 rng(derive_seed(config.seed, "probe/" + action + "/" + std::to_string(layer)));
  const auto train_neg = detail::sample_negatives(train_pool, train_pos.size(), config.negative_ratio, rng);
  const auto val_neg = detail::sample_negatives(val_pool, val_pos.size(), config.negative_ratio, rng);
  if (train_neg.empty() || val_neg.empty()) throw Error("probe", "no negatives available for " + action);

  const auto train = detail::gather(ds, layer, train_pos, train_neg);
  const auto val = detail::gather(ds, layer, val_pos, val_neg);
  std::vector<int> val_labels(val.y.size());
  std::transform(val.y.begin(), val.y.end(), val_labels.begin(), [](double v) { return v > 0.5 ? 1 : 0; });

  const std::size_t dim = ds.hidden_dim;
  Vector w(dim, 0.0);
  Vector b(1, 0.0);
  AdamWState w_state(dim), b_state(1);
  const auto w_hyper = config.hyper(config.weight_decay);
  const auto b_hyper = config.hyper(0.0);

  TrainTrace trace;
  trace.probe = {action, layer, w, 0.0, 0.0, 0.0, 0, config.seed};
  double best_auc = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.x.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vector scores(val.x.rows);
  std::vector<int> preds(val.x.rows);

  std::size_t epoch = 0;
  while (epoch < config.max_epochs) {
    const double lr = cosine_lr(static_cast<double>(epoch), static_cast<double>(config.max_epochs), config.lr_max,
                                config.lr_min);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const auto g = logistic_loss_grad(w, b[0], train.x, train.y,
                                        std::span<const std::size_t>(order.data() + start, stop - start));
      adamw_step(w, g.grad_w, w_state, w_hyper, lr);
      const double gb[1] = {g.grad_b};
      adamw_step(b, gb, b_state, b_hyper, lr);
    }
    ++epoch;

    for (std::size_t i = 0; i < val.x.rows; ++i) {
      scores[i] = dot(w, val.x.row(i)) + b[0];
      preds[i] = scores[i] >= 0.0 ? 1 : 0;
    }
    const double auc = auc_roc(std::span<const double>(scores), std::span<const int>(val_labels));
    trace.val_auc_history.push_back(auc);
    if (auc > best_auc) {
      best_auc = auc;
      since_best = 0;
      trace.best_epoch = epoch;
      trace.probe.weights = w;
      trace.probe.bias = b[0];
      trace.probe.val_auc = auc;
      trace.probe.val_f1 = f1_score(std::span<const int>(preds), std::span<const int>(val_labels));
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  trace.probe.trained_epochs = epoch;
  if (!all_finite(trace.probe.weights) || !std::isfinite(trace.probe.bias))
    throw Error("probe", "training diverged for " + action + " at layer " + std::to_string(layer));
  return trace;
}

/// Trains the one-vs-rest probe for `action` at `layer` and returns the
/// parameters from the epoch with the best validation AUC.
inline LinearProbe train_probe(const ActivationDataset& ds, const std::string& action, std::size_t layer,
                               const TrainConfig& config) {
  return train_probe_traced(ds, action, layer, config).probe;
}

struct LayerSummary {
  std::size_t layer = 0;
  double mean_auc = 0.0;
  double mean_f1 = 0.0;
  std::size_t n_probes = 0;
};

struct ActionSummary {
  std::string action;
  double mean_auc = 0.0;
  double mean_f1 = 0.0;
};

struct ProbeSuite {
  std::size_t hidden_dim = 0;
  std::map<std::pair<std::string, std::size_t>, LinearProbe> probes;

  const LinearProbe* find(const std::string& action, std::size_t layer) const {
    auto it = probes.find({action, layer});
    return it == probes.end() ? nullptr : &it->second;
  }

  /// Mean AUC/F1 per layer, ascending layer order.
  std::vector<LayerSummary> layer_summary() const {
    std::map<std::size_t, LayerSummary> acc;
    for (const auto& [key, p] : probes) {
      auto& s = acc[key.second];
      s.layer = key.second;
      s.mean_auc += p.val_auc;
      s.mean_f1 += p.val_f1;
      ++s.n_probes;
    }
    std::vector<LayerSummary> out;
    for (auto& [layer, s] : acc) {
      s.mean_auc /= static_cast<double>(s.n_probes);
      s.mean_f1 /= static_cast<double>(s.n_probes);
      out.push_back(s);
    }
    return out;
  }

  /// Mean AUC/F1 per action across layers, best first (ties by name).
  std::vector<ActionSummary> action_ranking() const {
    std::map<std::string, std::pair<ActionSummary, std::size_t>> acc;
    for (const auto& [key, p] : probes) {
      auto& [s, n] = acc[key.first];
      s.action = key.first;
      s.mean_auc += p.val_auc;
      s.mean_f1 += p.val_f1;
      ++n;
    }
    std::vector<ActionSummary> out;
    for (auto& [name, entry] : acc) {
      entry.first.mean_auc /= static_cast<double>(entry.second);
      entry.first.mean_f1 /= static_cast<double>(entry.second);
      out.push_back(entry.first);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ActionSummary& a, const ActionSummary& b) { return a.mean_auc > b.mean_auc; });
    return out;
  }

  double mean_auc() const {
    double s = 0.0;
    for (const auto& [key, p] : probes) s += p.val_auc;
    return probes.empty() ? 0.0 : s / static_cast<double>(probes.size());
  }

  double mean_f1() const {
    double s = 0.0;
    for (const auto& [key, p] : probes) s += p.val_f1;
    return probes.empty() ? 0.0 : s / static_cast<double>(probes.size());
  }
};

/// Trains every (action, layer) pair. Jobs run in parallel; results are merged
/// in (action, layer) order, so the suite does not depend on `jobs`.
inline ProbeSuite train_suite(const ActivationDataset& ds, const std::vector<std::string>& actions,
                              const std::vector<std::size_t>& layers, const TrainConfig& config,
                              unsigned jobs = 1) {
  std::vector<std::pair<std::string, std::size_t>> pairs;
  for (const auto& a : actions)
    for (auto l : layers) pairs.emplace_back(a, l);
  std::vector<LinearProbe> trained(pairs.size());
  parallel_for(pairs.size(), jobs,
               [&](std::size_t i) { trained[i] = train_probe(ds, pairs[i].first, pairs[i].second, config); });
  ProbeSuite suite;
  suite.hidden_dim = ds.hidden_dim;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (!suite.probes.emplace(pairs[i], std::move(trained[i])).second)
      throw Error("probe", "duplicate (action, layer) request: " + pairs[i].first + "@" +
                               std::to_string(pairs[i].second));
  return suite;
}

inline std::string probe_blob_name(const std::string& action, std::size_t layer) {
  return action + ".L" + std::to_string(layer) + ".f32";
}

/// Writes `<dir>/index.json` plus one float32 weight blob per probe.
inline void save_suite(const ProbeSuite& suite, const std::filesystem::path& dir) {
  nlohmann::json index;
  index["format"] = "probe-suite-v1";
  index["hidden_dim"] = suite.hidden_dim;
  index["probes"] = nlohmann::json::array();
  for (const auto& [key, p] : suite.probes) {
    const auto blob = probe_blob_name(p.action, p.layer);
    binio::write_file(dir / blob, binio::encode_f32(p.weights), "probe");
    index["probes"].push_back({{"action", p.action},
                               {"layer", p.layer},
                               {"bias", p.bias},
                               {"val_auc", p.val_auc},
                               {"val_f1", p.val_f1},
                               {"trained_epochs", p.trained_epochs},
                               {"seed", p.seed},
                               {"blob", blob}});
  }
  index["summary"] = {{"mean_auc", suite.mean_auc()}, {"mean_f1", suite.mean_f1()}};
  index["reference"] = reference_run::probe_metadata();
  binio::write_file(dir / "index.json", index.dump(2) + "\n", "probe");
}

inline ProbeSuite load_suite(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path)) throw Error("probe", "missing probe index " + index_path.string());
  ProbeSuite suite;
  try {
    const auto index = nlohmann::json::parse(binio::read_file(index_path, "probe"));
    suite.hidden_dim = index.at("hidden_dim").get<std::size_t>();
    for (const auto& e : index.at("probes")) {
      LinearProbe p;
      p.action = e.at("action").get<std::string>();
      p.layer = e.at("layer").get<std::size_t>();
      p.bias = e.at("bias").get<double>();
      p.val_auc = e.at("val_auc").get<double>();
      p.val_f1 = e.at("val_f1").get<double>();
      p.trained_epochs = e.at("trained_epochs").get<std::size_t>();
      p.seed = e.at("seed").get<std::uint64_t>();
      p.weights = binio::decode_f32(binio::read_file(dir / e.at("blob").get<std::string>(), "probe"),
                                    suite.hidden_dim, "probe");
      suite.probes.emplace(std::make_pair(p.action, p.layer), std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("probe", "malformed probe index " + index_path.string() + ": " + e.what());
  }
  return suite;
}

/// Rounds weights to float32, matching what `save_suite` + `load_suite` yields.
inline ProbeSuite as_stored(ProbeSuite suite) {
  for (auto& [key, p] : suite.probes)
    for (auto& w : p.weights) w = static_cast<double>(static_cast<float>(w));
  return suite;
}

inline std::string format_fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// Tab-separated probe table (action, layer, auc, f1, epochs), followed by the
/// per-layer means and the per-action ranking.
inline std::string probe_report(const ProbeSuite& suite) {
  std::ostringstream os;
  os << "action\tlayer\tauc\tf1\tepochs\n";
  for (const auto& [key, p] : suite.probes)
    os << p.action << '\t' << p.layer << '\t' << format_fixed(p.val_auc) << '\t' << format_fixed(p.val_f1) << '\t'
       << p.trained_epochs << '\n';
  os << "\n# per-layer\nlayer\tmean_auc\tmean_f1\tn_probes\n";
  for (const auto& s : suite.layer_summary())
    os << s.layer << '\t' << format_fixed(s.mean_auc) << '\t' << format_fixed(s.mean_f1) << '\t' << s.n_probes
       << '\n';
  os << "\n# per-action ranking\nrank\taction\tmean_auc\tmean_f1\n";
  std::size_t rank = 1;
  for (const auto& s : suite.action_ranking())
    os << rank++ << '\t' << s.action << '\t' << format_fixed(s.mean_auc) << '\t' << format_fixed(s.mean_f1) << '\n';
  os << "\n# overall mean_auc " << format_fixed(suite.mean_auc()) << " mean_f1 " << format_fixed(suite.mean_f1())
     << "\n# reference (" << reference_run::kModel << ", full scale): mean_auc "
     << format_fixed(reference_run::kProbeMeanAuc, 2) << " mean_f1 " << format_fixed(reference_run::kProbeMeanF1, 2)
     << " peak layer " << reference_run::kPeakLayer << " auc " << format_fixed(reference_run::kPeakLayerAuc, 3)
     << '\n';
  return os.str();
}

}  // namespace tomdecomp
