#include "driv/ordinal.hpp"

#include <cmath>
#include <string>

namespace driv {

namespace {
constexpr double kProbClamp = 1e-12;
constexpr double kNormTol = 1e-6;
}  // namespace

RankSet::RankSet(std::vector<double> r) : ranks(std::move(r)) {
  if (ranks.size() < 2) throw Error("rank set needs at least 2 ranks");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (!(ranks[i] > 0.0)) throw Error("ranks must be strictly positive");
    if (i > 0 && !(ranks[i] > ranks[i - 1]))
      throw Error("ranks must be strictly increasing");
  }
}

std::optional<PenaltyKind> penalty_from_name(std::string_view name) {
  if (name == "sld") return PenaltyKind::SquareLogDiff;
  if (name == "ad") return PenaltyKind::AbsoluteDiff;
  return std::nullopt;
}

const char* penalty_name(PenaltyKind kind) {
  return kind == PenaltyKind::SquareLogDiff ? "sld" : "ad";
}

LevelSpace LevelSpace::three_level() {
  return LevelSpace{{Level::Impossible, Level::Possible, Level::Preferable},
                    RankSet({1.0, 2.0, 3.0})};
}

LevelSpace LevelSpace::binary() {
  return LevelSpace{{Level::Impossible, Level::Preferable},
                    RankSet({1.0, 3.0})};
}

std::optional<int> LevelSpace::index_of(Level l) const {
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (levels[i] == l) return static_cast<int>(i);
  return std::nullopt;
}

double metric_penalty(double r_t, double r_i, PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::SquareLogDiff: {
      if (!(r_t > 0.0) || !(r_i > 0.0))
        throw Error("square log difference requires positive ranks");
      const double d = std::log(r_i) - std::log(r_t);
      return d * d;
    }
    case PenaltyKind::AbsoluteDiff:
      return std::abs(r_i - r_t);
  }
  throw Error("unknown penalty kind");
}

SoftLabel sord_encode(Level target, const LevelSpace& space, PenaltyKind kind,
                      double penalty_scale) {
  if (is_void(target)) throw Error("cannot encode a void target");
  const auto t_idx = space.index_of(target);
  if (!t_idx)
    throw Error(std::string("target level '") + level_name(target) +
                "' is not in the level space");
  const double r_t = space.rank_of_index(*t_idx);

  const int k = space.size();
  std::vector<double> exps(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double phi = metric_penalty(r_t, space.ranks[i], kind);
    exps[static_cast<std::size_t>(i)] = std::exp(-penalty_scale * phi);
    sum += exps[static_cast<std::size_t>(i)];
  }
  for (auto& e : exps) e /= sum;
  return SoftLabel{std::move(exps)};
}

SoftLabel one_hot_encode(Level target, const LevelSpace& space) {
  if (is_void(target)) throw Error("cannot encode a void target");
  const auto t_idx = space.index_of(target);
  if (!t_idx)
    throw Error(std::string("target level '") + level_name(target) +
                "' is not in the level space");
  std::vector<double> p(static_cast<std::size_t>(space.size()), 0.0);
  p[static_cast<std::size_t>(*t_idx)] = 1.0;
  return SoftLabel{std::move(p)};
}

std::optional<LabelMode> label_mode_from_name(std::string_view name) {
  if (name == "one_hot") return LabelMode::OneHot;
  if (name == "sord") return LabelMode::Sord;
  return std::nullopt;
}

const char* label_mode_name(LabelMode mode) {
  return mode == LabelMode::OneHot ? "one_hot" : "sord";
}

std::vector<SoftLabel> label_table(const LevelSpace& space, PenaltyKind kind,
                                   LabelMode mode, double penalty_scale) {
  std::vector<SoftLabel> table;
  table.reserve(space.levels.size());
  for (Level l : space.levels) {
    table.push_back(mode == LabelMode::Sord
                        ? sord_encode(l, space, kind, penalty_scale)
                        : one_hot_encode(l, space));
  }
  return table;
}

EncodedMask encode_mask(const LevelMask& levels, const LevelSpace& space,
                        PenaltyKind kind, LabelMode mode) {
  const auto table = label_table(space, kind, mode);
  const int k = space.size();
  EncodedMask out;
  out.k = k;
  out.height = levels.height;
  out.width = levels.width;
  out.probs = Tensor<double>({k, levels.height, levels.width});
  out.voids.assign(levels.values.size(), 0);

  const std::int64_t plane = levels.pixel_count();
  for (std::int64_t p = 0; p < plane; ++p) {
    const Level l = levels.values[static_cast<std::size_t>(p)];
    if (is_void(l)) {
      out.voids[static_cast<std::size_t>(p)] = 1;
      continue;
    }
    const auto idx = space.index_of(l);
    if (!idx)
      throw Error(std::string("mask level '") + level_name(l) +
                  "' is not in the level space");
    const SoftLabel& lbl = table[static_cast<std::size_t>(*idx)];
    for (int c = 0; c < k; ++c) out.probs[c * plane + p] = lbl[c];
  }
  return out;
}

namespace {

void check_normalized(const SoftLabel& v, const char* what) {
  double s = 0.0;
  for (double p : v.probs) {
    if (p < -kNormTol || p > 1.0 + kNormTol)
      throw Error(std::string(what) + " entries must lie in [0,1]");
    s += p;
  }
  if (std::abs(s - 1.0) > kNormTol)
    throw Error(std::string(what) + " is not normalized");
}

}  // namespace

double kl_loss(const SoftLabel& y, const SoftLabel& y_hat) {
  if (y.size() != y_hat.size()) throw ShapeError("KL: size mismatch");
  check_normalized(y, "target label");
  check_normalized(y_hat, "prediction");
  double loss = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    const double yi = y[i];
    if (yi <= 0.0) continue;  // 0 * ln 0 = 0
    const double qi = std::max(y_hat[i], kProbClamp);
    loss += yi * (std::log(yi) - std::log(qi));
  }
  return loss;
}

double batch_loss(const Tensor<double>& targets, const Tensor<double>& preds,
                  const Tensor<std::uint8_t>& voids,
                  const Tensor<double>* weights) {
  if (!targets.same_shape(preds))
    throw ShapeError("batch_loss: target/prediction shape mismatch");
  if (targets.ndim() != 4) throw ShapeError("batch_loss: expected (B,K,H,W)");
  const int b = targets.dim(0), k = targets.dim(1), h = targets.dim(2),
            w = targets.dim(3);
  if (voids.ndim() != 3 || voids.dim(0) != b || voids.dim(1) != h ||
      voids.dim(2) != w)
    throw ShapeError("batch_loss: void mask shape mismatch");
  if (weights && !weights->same_shape(voids))
    throw ShapeError("batch_loss: weight map shape mismatch");

  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  double sum = 0.0;
  std::int64_t n_valid = 0;
  for (int n = 0; n < b; ++n) {
    const double* tgt = targets.data() + static_cast<std::int64_t>(n) * k * plane;
    const double* prd = preds.data() + static_cast<std::int64_t>(n) * k * plane;
    const std::uint8_t* vd = voids.data() + static_cast<std::int64_t>(n) * plane;
    const double* wt =
        weights ? weights->data() + static_cast<std::int64_t>(n) * plane
                : nullptr;
    for (std::int64_t p = 0; p < plane; ++p) {
      if (vd[p]) continue;
      double l = 0.0;
      for (int c = 0; c < k; ++c) {
        const double yi = tgt[c * plane + p];
        if (yi <= 0.0) continue;
        const double qi = std::max(prd[c * plane + p], kProbClamp);
        l += yi * (std::log(yi) - std::log(qi));
      }
      sum += (wt ? wt[p] : 1.0) * l;
      ++n_valid;
    }
  }
  if (n_valid == 0) throw Error("batch_loss: all pixels are void");
  return sum / static_cast<double>(n_valid);
}

Level decode_argmax(const SoftLabel& y_hat, const LevelSpace& space) {
  if (y_hat.size() != space.size())
    throw ShapeError("decode_argmax: label size does not match level space");
  int best = 0;
  for (int i = 1; i < y_hat.size(); ++i)
    if (y_hat[i] > y_hat[best]) best = i;  // ties keep the lower rank
  return space.level_at(best);
}

LevelMask decode_argmax_grid(const Tensor<double>& probs,
                             const LevelSpace& space) {
  if (probs.ndim() != 3 || probs.dim(0) != space.size())
    throw ShapeError("decode_argmax_grid: expected (K,H,W) probabilities");
  const int k = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  LevelMask out;
  out.height = h;
  out.width = w;
  out.values.resize(static_cast<std::size_t>(plane));
  const double* d = probs.data();
  for (std::int64_t p = 0; p < plane; ++p) {
    int best = 0;
    double best_v = d[p];
    for (int c = 1; c < k; ++c) {
      const double v = d[c * plane + p];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.values[static_cast<std::size_t>(p)] = space.level_at(best);
  }
  return out;
}

double expected_rank(const SoftLabel& y_hat, const RankSet& ranks) {
  if (y_hat.size() != ranks.size())
    throw ShapeError("expected_rank: label size does not match rank set");
  double e = 0.0;
  for (int i = 0; i < ranks.size(); ++i) e += ranks[i] * y_hat[i];
  return e;
}

Tensor<double> expected_rank_grid(const Tensor<double>& probs,
                                  const RankSet& ranks) {
  if (probs.ndim() != 3 || probs.dim(0) != ranks.size())
    throw ShapeError("expected_rank_grid: expected (K,H,W) probabilities");
  const int k = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor<double> out({h, w});
  const double* d = probs.data();
  for (std::int64_t p = 0; p < plane; ++p) {
    double e = 0.0;
    for (int c = 0; c < k; ++c) e += ranks[c] * d[c * plane + p];
    out[p] = e;
  }
  return out;
}

}  // namespace driv
