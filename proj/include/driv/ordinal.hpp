#pragma once

#include <optional>
#include <vector>

#include "driv/core/tensor.hpp"
#include "driv/taxonomy.hpp"

namespace driv {

// Strictly increasing, strictly positive ranks, one per level. The log
// penalty requires positivity.
struct RankSet {
  std::vector<double> ranks;

  explicit RankSet(std::vector<double> r);
  int size() const { return static_cast<int>(ranks.size()); }
  double operator[](int i) const { return ranks[static_cast<std::size_t>(i)]; }
  double min() const { return ranks.front(); }
  double max() const { return ranks.back(); }
};

enum class PenaltyKind {
  SquareLogDiff,  // |ln r_i - ln r_t|^2
  AbsoluteDiff    // |r_i - r_t|
};

std::optional<PenaltyKind> penalty_from_name(std::string_view name);
const char* penalty_name(PenaltyKind kind);

// The set of levels a model distinguishes, with their ranks. The default is
// the full 3-level space; binary collapses train on {impossible, preferable}
// with ranks {1, 3}.
struct LevelSpace {
  std::vector<Level> levels;  // ordered least to most driveable
  RankSet ranks;

  static LevelSpace three_level();
  static LevelSpace binary();  // {impossible, preferable}, ranks {1,3}

  int size() const { return static_cast<int>(levels.size()); }
  // Index of a non-void level within this space; nullopt when absent.
  std::optional<int> index_of(Level l) const;
  Level level_at(int index) const {
    return levels[static_cast<std::size_t>(index)];
  }
  double rank_of_index(int index) const { return ranks[index]; }
};

// Probability vector over the ranks of a LevelSpace.
struct SoftLabel {
  std::vector<double> probs;

  int size() const { return static_cast<int>(probs.size()); }
  double operator[](int i) const { return probs[static_cast<std::size_t>(i)]; }
};

// Penalty for predicting rank r_i when the target is r_t.
double metric_penalty(double r_t, double r_i, PenaltyKind kind);

// Soft ordinal encoding: probs_i = softmax_i(-scale * phi(r_t, r_i)).
// scale != 1 is only used to probe the one-hot / uniform limits.
SoftLabel sord_encode(Level target, const LevelSpace& space, PenaltyKind kind,
                      double penalty_scale = 1.0);

SoftLabel one_hot_encode(Level target, const LevelSpace& space);

enum class LabelMode { OneHot, Sord };

std::optional<LabelMode> label_mode_from_name(std::string_view name);
const char* label_mode_name(LabelMode mode);

// One SoftLabel per level index of `space`; the per-pixel encoding below is a
// table lookup, never a per-pixel recomputation.
std::vector<SoftLabel> label_table(const LevelSpace& space, PenaltyKind kind,
                                   LabelMode mode, double penalty_scale = 1.0);

// Per-pixel encoded mask: probs is (K, H, W); voids flags pixels that carry
// no label. Levels outside the space (after a binary collapse this cannot
// happen) raise an error.
struct EncodedMask {
  Tensor<double> probs;            // (K, H, W); zero where void
  std::vector<std::uint8_t> voids;  // row-major H*W, 1 = void
  int k = 0, height = 0, width = 0;
};

EncodedMask encode_mask(const LevelMask& levels, const LevelSpace& space,
                        PenaltyKind kind, LabelMode mode);

// KL(y || y_hat) with natural log, 0*ln 0 = 0 and y_hat clamped at 1e-12.
// Both inputs must be normalized within 1e-6.
double kl_loss(const SoftLabel& y, const SoftLabel& y_hat);

// Mean weighted KL over non-void pixels of a batch. `targets` and `preds`
// are (B, K, H, W); `voids` is (B, H, W) nonzero = void; `weights` may be
// null (w == 1). An all-void batch has no defined mean and is an error.
double batch_loss(const Tensor<double>& targets, const Tensor<double>& preds,
                  const Tensor<std::uint8_t>& voids,
                  const Tensor<double>* weights = nullptr);

// Level of the highest-probability rank; ties break toward the lower rank.
Level decode_argmax(const SoftLabel& y_hat, const LevelSpace& space);

// Argmax decode of a (K, H, W) probability grid.
LevelMask decode_argmax_grid(const Tensor<double>& probs,
                             const LevelSpace& space);

// Probabilistic estimate sum_i r_i * y_i, always within [min rank, max rank].
double expected_rank(const SoftLabel& y_hat, const RankSet& ranks);

// Per-pixel expected rank of a (K, H, W) probability grid.
Tensor<double> expected_rank_grid(const Tensor<double>& probs,
                                  const RankSet& ranks);

}  // namespace driv
