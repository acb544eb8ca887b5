#pragma once

// Contrastive activation addition: steering directions from paired
// positive/negative completion activations, and the additive intervention.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/core.hpp"

namespace tomdecomp {

enum class BeliefCondition { false_belief, true_belief };

inline const char* to_string(BeliefCondition c) {
  return c == BeliefCondition::false_belief ? "false_belief" : "true_belief";
}

struct ContrastiveTriplet {
  std::string story;
  std::string question;
  std::string positive;  // correct belief attribution
  std::string negative;  // incorrect belief attribution
  BeliefCondition condition = BeliefCondition::false_belief;

  bool operator==(const ContrastiveTriplet&) const = default;
};

struct TripletSet {
  std::vector<ContrastiveTriplet> triplets;
  std::size_t n_false_belief = 0;
  std::size_t n_true_belief = 0;
  std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const ContrastiveTriplet& t) {
  return {{"story", t.story},
          {"question", t.question},
          {"positive", t.positive},
          {"negative", t.negative},
          {"condition", to_string(t.condition)}};
}

/// Reads one {story, question, positive, negative, condition} object per line.
inline TripletSet load_triplets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("steering", "cannot open triplet file " + path.string());
  TripletSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error("steering", "malformed triplet record at " + where);
    }
    ContrastiveTriplet t;
    for (auto [field, dst] : {std::pair{"story", &t.story}, std::pair{"question", &t.question},
                              std::pair{"positive", &t.positive}, std::pair{"negative", &t.negative}}) {
      if (!j.contains(field) || !j[field].is_string() || j[field].get<std::string>().empty())
        throw Error("steering", std::string("triplet at ") + where + " is missing field " + field);
      *dst = j[field].get<std::string>();
    }
    const auto cond = j.value("condition", std::string{});
    if (cond == "false_belief") t.condition = BeliefCondition::false_belief;
    else if (cond == "true_belief") t.condition = BeliefCondition::true_belief;
    else throw Error("steering", "triplet at " + where + " has unknown condition \"" + cond + "\"");
    if (t.positive == t.negative) throw Error("steering", "triplet at " + where + " has identical completions");
    (t.condition == BeliefCondition::false_belief ? set.n_false_belief : set.n_true_belief)++;
    set.triplets.push_back(std::move(t));
  }
  if (set.triplets.empty()) set.warnings.push_back("no triplets in " + path.string());
  else if (set.n_false_belief != set.n_true_belief)
    set.warnings.push_back("condition split is " + std::to_string(set.n_false_belief) + " false / " +
                           std::to_string(set.n_true_belief) + " true");
  return set;
}

enum class SteeringMode { mean_diff, pca_top1 };
enum class PositionPolicy { all_positions, final_position };

inline const char* to_string(SteeringMode m) { return m == SteeringMode::mean_diff ? "mean_diff" : "pca_top1"; }
inline const char* to_string(PositionPolicy p) {
  return p == PositionPolicy::all_positions ? "all_positions" : "final_position";
}

inline SteeringMode parse_steering_mode(std::string_view s) {
  if (s == "mean_diff") return SteeringMode::mean_diff;
  if (s == "pca_top1") return SteeringMode::pca_top1;
  throw Error("steering", "unknown steering mode \"" + std::string(s) + "\"");
}

inline PositionPolicy parse_position_policy(std::string_view s) {
  if (s == "all_positions") return PositionPolicy::all_positions;
  if (s == "final_position") return PositionPolicy::final_position;
  throw Error("steering", "unknown position policy \"" + std::string(s) + "\"");
}

struct SteeringVector {
  std::size_t layer = 0;
  Vector direction;
  SteeringMode mode = SteeringMode::mean_diff;
  std::size_t n_pairs = 0;

  bool operator==(const SteeringVector&) const = default;
};

struct SteeringConfig {
  std::vector<std::size_t> layers;
  double multiplier = 1.0;
  SteeringMode mode = SteeringMode::mean_diff;
  PositionPolicy positions = PositionPolicy::all_positions;
};

/// Direction for one layer. `pos` and `neg` are row-aligned: row i of each
/// comes from the same triplet.
///   mean_diff: mean of d_i = pos_i - neg_i.
///   pca_top1:  top principal component of the centered d_i, signed so that
///              it points along mean(d) and scaled to |mean(d)|.
inline SteeringVector build_steering_vector(const Matrix& pos, const Matrix& neg, std::size_t layer,
                                            SteeringMode mode) {
  if (pos.rows != neg.rows || pos.cols != neg.cols)
    throw Error("steering", "layer " + std::to_string(layer) + ": positive " + std::to_string(pos.rows) + "x" +
                                std::to_string(pos.cols) + " vs negative " + std::to_string(neg.rows) + "x" +
                                std::to_string(neg.cols));
  if (pos.rows == 0) throw Error("steering", "no pairs for layer " + std::to_string(layer));
  if (mode == SteeringMode::pca_top1 && pos.rows < 2)
    throw Error("steering", "pca_top1 needs at least 2 pairs, got " + std::to_string(pos.rows));

  const std::size_t n = pos.rows, d = pos.cols;
  Matrix diff(n, d);
  for (std::size_t i = 0; i < n * d; ++i) diff.data[i] = pos.data[i] - neg.data[i];
  // Mean taken around the first difference, so identical pairs give that
  // difference back exactly.
  Vector mean(d, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) mean[k] += diff(i, k) - diff(0, k);
  for (std::size_t k = 0; k < d; ++k) mean[k] = diff(0, k) + mean[k] / static_cast<double>(n);

  SteeringVector out{layer, mean, mode, n};
  if (mode == SteeringMode::pca_top1) {
    Eigen::MatrixXd centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) centered(i, k) = diff(i, k) - mean[k];
    const Eigen::MatrixXd cov = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("steering", "eigen-decomposition failed");
    const double top = solver.eigenvalues()(d - 1);
    if (top > 0.0) {
      Vector pc(d);
      for (std::size_t k = 0; k < d; ++k) pc[k] = solver.eigenvectors()(k, d - 1);
      const double sign = dot(pc, mean) < 0.0 ? -1.0 : 1.0;
      const double scale = sign * norm2(mean) / norm2(pc);
      for (std::size_t k = 0; k < d; ++k) out.direction[k] = pc[k] * scale;
    }
  }
  if (!all_finite(out.direction)) throw Error("steering", "non-finite direction at layer " + std::to_string(layer));
  return out;
}

/// One vector per layer in `config.layers`; `pos_by_layer[l]` holds the
/// positive activations at capture layer l.
inline std::vector<SteeringVector> build_steering_vectors(std::span<const Matrix> pos_by_layer,
                                                          std::span<const Matrix> neg_by_layer,
                                                          const SteeringConfig& config) {
  if (pos_by_layer.size() != neg_by_layer.size())
    throw Error("steering", "positive/negative layer counts differ");
  if (config.layers.empty()) throw Error("steering", "no steering layers configured");
  std::vector<SteeringVector> out;
  for (auto layer : config.layers) {
    if (layer >= pos_by_layer.size())
      throw Error("steering", "steering layer " + std::to_string(layer) + " beyond model depth " +
                                  std::to_string(pos_by_layer.size()));
    out.push_back(build_steering_vector(pos_by_layer[layer], neg_by_layer[layer], layer, config.mode));
  }
  return out;
}

/// activation + multiplier * direction, elementwise. A zero multiplier returns
/// the input unchanged.
inline Vector apply_steering(std::span<const double> activation, const SteeringVector& vec, double multiplier) {
  if (activation.size() != vec.direction.size())
    throw Error("steering", "apply_steering: activation length " + std::to_string(activation.size()) +
                                " != direction length " + std::to_string(vec.direction.size()));
  Vector out(activation.begin(), activation.end());
  if (multiplier == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += multiplier * vec.direction[i];
  return out;
}

/// In-place variant used on the residual stream.
inline void apply_steering_inplace(std::span<double> activation, const SteeringVector& vec, double multiplier) {
  if (activation.size() != vec.direction.size())
    throw Error("steering", "apply_steering: activation length " + std::to_string(activation.size()) +
                                " != direction length " + std::to_string(vec.direction.size()));
  if (multiplier == 0.0) return;
  for (std::size_t i = 0; i < activation.size(); ++i) activation[i] += multiplier * vec.direction[i];
}

/// Writes `<dir>/index.json` plus one float32 blob per layer.
inline void save_vectors(const std::vector<SteeringVector>& vectors, const std::filesystem::path& dir) {
  nlohmann::json index;
  index["format"] = "steering-vectors-v1";
  index["hidden_dim"] = vectors.empty() ? 0 : vectors.front().direction.size();
  index["vectors"] = nlohmann::json::array();
  for (const auto& v : vectors) {
    const auto blob = "layer" + std::to_string(v.layer) + ".f32";
    binio::write_file(dir / blob, binio::encode_f32(v.direction), "steering");
    index["vectors"].push_back({{"layer", v.layer},
                                {"mode", to_string(v.mode)},
                                {"n_pairs", v.n_pairs},
                                {"norm", norm2(v.direction)},
                                {"blob", blob}});
  }
  binio::write_file(dir / "index.json", index.dump(2) + "\n", "steering");
}

inline std::vector<SteeringVector> load_vectors(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path))
    throw Error("steering", "missing steering index " + index_path.string());
  std::vector<SteeringVector> out;
  try {
    const auto index = nlohmann::json::parse(binio::read_file(index_path, "steering"));
    const auto dim = index.at("hidden_dim").get<std::size_t>();
    for (const auto& e : index.at("vectors")) {
      SteeringVector v;
      v.layer = e.at("layer").get<std::size_t>();
      v.mode = parse_steering_mode(e.at("mode").get<std::string>());
      v.n_pairs = e.at("n_pairs").get<std::size_t>();
      v.direction = binio::decode_f32(binio::read_file(dir / e.at("blob").get<std::string>(), "steering"), dim,
                                      "steering");
      out.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("steering", "malformed steering index " + index_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace tomdecomp
