#pragma once

#include <map>

#include "qsplit/evolution.hpp"

namespace qsplit {

/// Populations of one mode, accumulated from weighted pure components or
/// from density-matrix sector blocks without materialising the full state.
class DiagReducer {
 public:
  DiagReducer(const FockSpace& space, ModeIndex mode);
  void add_component(double weight, const Support& support);
  void add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block);
  const std::vector<double>& populations() const { return p_; }

 private:
  FockSpace space_;
  ModeIndex mode_;
  std::vector<double> p_;
};

/// Dense reduced single-mode density matrix.
class SingleModeReducer {
 public:
  SingleModeReducer(const FockSpace& space, ModeIndex mode);
  void add_component(double weight, const Support& support);
  void add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block);
  const Mat& rho() const { return rho_; }

 private:
  FockSpace space_;
  ModeIndex mode_;
  std::uint64_t traced_mask_;
  Mat rho_;
};

struct PairMoments {
  double n_x = 0.0;
  double n_y = 0.0;
  cplx xdag_y = 0.0;  // zero by symmetry unless the block weights are equal
};

/// Two-mode reduced state of a charge-symmetric mixture, stored as blocks
/// over sigma = w_x i_x + w_y i_y. Contributions that would break the block
/// structure raise; callers fall back to PairDenseReducer for those states.
class PairBlockReducer {
 public:
  PairBlockReducer(const FockSpace& space, ModeIndex mode_x, ModeIndex mode_y, long w_x,
                   long w_y);

  void add_component(double weight, const Support& support);
  void add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block);

  struct Block {
    std::vector<std::pair<int, int>> basis;  // (i_x, i_y), ascending i_x
    Mat m;
  };
  const std::map<long, Block>& blocks() const { return blocks_; }
  int dim_x() const { return dx_; }
  int dim_y() const { return dy_; }
  long weight_x() const { return wx_; }
  long weight_y() const { return wy_; }

  double trace() const;
  PairMoments moments() const;
  /// Marginal populations of each mode.
  std::vector<double> populations_x() const;
  std::vector<double> populations_y() const;

 private:
  Block& block_for(long sigma);
  FockSpace space_;
  ModeIndex mx_, my_;
  long wx_, wy_;
  int dx_, dy_;
  std::uint64_t traced_mask_;
  std::map<long, Block> blocks_;
  std::map<long, std::map<int, int>> pos_;  // sigma -> i_x -> basis position
};

/// Dense two-mode reduced state (general fallback, e.g. coherent pumps).
class PairDenseReducer {
 public:
  PairDenseReducer(const FockSpace& space, ModeIndex mode_x, ModeIndex mode_y);
  void add_component(double weight, const Support& support);
  void add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block);
  const Mat& rho() const { return rho_; }  // indexed i_x * dim_y + i_y
  int dim_x() const { return dx_; }
  int dim_y() const { return dy_; }

 private:
  FockSpace space_;
  ModeIndex mx_, my_;
  std::uint64_t traced_mask_;
  int dx_, dy_;
  Mat rho_;
};

/// Group support entries by the masked (traced) part of the packed index;
/// bucket order is sorted by key so accumulation is reproducible.
std::vector<std::pair<std::uint64_t, std::vector<std::uint32_t>>> bucket_by_mask(
    const Support& support, std::uint64_t mask);

std::uint64_t traced_mask(const FockSpace& space, std::initializer_list<ModeIndex> kept);

}  // namespace qsplit
