#include "qsplit/reduce.hpp"

#include <algorithm>
#include <stdexcept>

namespace qsplit {

namespace {

int byte_of(std::uint64_t key, ModeIndex m) {
  return static_cast<int>((key >> (8 * m)) & 0xff);
}

}  // namespace

std::uint64_t traced_mask(const FockSpace& space, std::initializer_list<ModeIndex> kept) {
  std::uint64_t mask = 0;
  for (std::size_t m = 0; m < space.mode_count(); ++m) {
    mask |= 0xffull << (8 * m);
  }
  for (ModeIndex m : kept) mask &= ~(0xffull << (8 * m));
  return mask;
}

std::vector<std::pair<std::uint64_t, std::vector<std::uint32_t>>> bucket_by_mask(
    const Support& support, std::uint64_t mask) {
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed;
  keyed.reserve(support.size());
  for (std::uint32_t i = 0; i < support.size(); ++i) {
    keyed.push_back({support[i].first & mask, i});
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::pair<std::uint64_t, std::vector<std::uint32_t>>> out;
  for (const auto& [key, idx] : keyed) {
    if (out.empty() || out.back().first != key) out.push_back({key, {}});
    out.back().second.push_back(idx);
  }
  return out;
}

DiagReducer::DiagReducer(const FockSpace& space, ModeIndex mode)
    : space_(space), mode_(mode), p_(space.dim(mode), 0.0) {
  space.require_mode(mode);
}

void DiagReducer::add_component(double weight, const Support& support) {
  for (const auto& [key, amp] : support) {
    p_[byte_of(key, mode_)] += weight * std::norm(amp);
  }
}

void DiagReducer::add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block) {
  for (std::size_t i = 0; i < basis.size(); ++i) {
    p_[byte_of(basis[i], mode_)] += block(i, i).real();
  }
}

SingleModeReducer::SingleModeReducer(const FockSpace& space, ModeIndex mode)
    : space_(space),
      mode_(mode),
      traced_mask_(traced_mask(space, {mode})),
      rho_(Mat::Zero(space.dim(mode), space.dim(mode))) {
  space.require_mode(mode);
}

void SingleModeReducer::add_component(double weight, const Support& support) {
  for (const auto& [key, idxs] : bucket_by_mask(support, traced_mask_)) {
    for (std::uint32_t i : idxs) {
      int ni = byte_of(support[i].first, mode_);
      for (std::uint32_t j : idxs) {
        int nj = byte_of(support[j].first, mode_);
        rho_(ni, nj) += weight * support[i].second * std::conj(support[j].second);
      }
    }
  }
}

void SingleModeReducer::add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block) {
  Support fake;
  fake.reserve(basis.size());
  for (auto key : basis) fake.push_back({key, 0.0});
  for (const auto& [key, idxs] : bucket_by_mask(fake, traced_mask_)) {
    for (std::uint32_t i : idxs) {
      int ni = byte_of(basis[i], mode_);
      for (std::uint32_t j : idxs) {
        rho_(ni, byte_of(basis[j], mode_)) += block(i, j);
      }
    }
  }
}

PairBlockReducer::PairBlockReducer(const FockSpace& space, ModeIndex mode_x, ModeIndex mode_y,
                                   long w_x, long w_y)
    : space_(space),
      mx_(mode_x),
      my_(mode_y),
      wx_(w_x),
      wy_(w_y),
      dx_(space.dim(mode_x)),
      dy_(space.dim(mode_y)),
      traced_mask_(traced_mask(space, {mode_x, mode_y})) {
  space.require_mode(mode_x);
  space.require_mode(mode_y);
  if (mode_x == mode_y) throw std::invalid_argument("PairBlockReducer: distinct modes required");
  if (w_x < 1 || w_y < 1) throw std::invalid_argument("PairBlockReducer: weights must be >= 1");
}

PairBlockReducer::Block& PairBlockReducer::block_for(long sigma) {
  auto it = blocks_.find(sigma);
  if (it != blocks_.end()) return it->second;
  Block b;
  auto& pos = pos_[sigma];
  for (int ix = 0; ix < dx_; ++ix) {
    long rem = sigma - wx_ * ix;
    if (rem < 0) break;
    if (rem % wy_ != 0) continue;
    long iy = rem / wy_;
    if (iy >= dy_) continue;
    pos[ix] = static_cast<int>(b.basis.size());
    b.basis.push_back({ix, static_cast<int>(iy)});
  }
  b.m = Mat::Zero(b.basis.size(), b.basis.size());
  return blocks_.emplace(sigma, std::move(b)).first->second;
}

void PairBlockReducer::add_component(double weight, const Support& support) {
  for (const auto& [key, idxs] : bucket_by_mask(support, traced_mask_)) {
    long sigma = -1;
    for (std::uint32_t i : idxs) {
      long s = wx_ * byte_of(support[i].first, mx_) + wy_ * byte_of(support[i].first, my_);
      if (sigma < 0) {
        sigma = s;
      } else if (s != sigma) {
        throw std::logic_error("PairBlockReducer: component breaks the block structure");
      }
    }
    Block& b = block_for(sigma);
    const auto& pos = pos_[sigma];
    for (std::uint32_t i : idxs) {
      int pi = pos.at(byte_of(support[i].first, mx_));
      for (std::uint32_t j : idxs) {
        int pj = pos.at(byte_of(support[j].first, mx_));
        b.m(pi, pj) += weight * support[i].second * std::conj(support[j].second);
      }
    }
  }
}

void PairBlockReducer::add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block) {
  Support fake;
  fake.reserve(basis.size());
  for (auto key : basis) fake.push_back({key, 0.0});
  for (const auto& [key, idxs] : bucket_by_mask(fake, traced_mask_)) {
    for (std::uint32_t i : idxs) {
      long si = wx_ * byte_of(basis[i], mx_) + wy_ * byte_of(basis[i], my_);
      Block& b = block_for(si);
      const auto& pos = pos_[si];
      int pi = pos.at(byte_of(basis[i], mx_));
      for (std::uint32_t j : idxs) {
        long sj = wx_ * byte_of(basis[j], mx_) + wy_ * byte_of(basis[j], my_);
        if (sj != si) {
          throw std::logic_error("PairBlockReducer: DM block breaks the block structure");
        }
        b.m(pi, pos.at(byte_of(basis[j], mx_))) += block(i, j);
      }
    }
  }
}

double PairBlockReducer::trace() const {
  double tr = 0;
  for (const auto& [sigma, b] : blocks_) tr += b.m.trace().real();
  return tr;
}

PairMoments PairBlockReducer::moments() const {
  PairMoments pm;
  for (const auto& [sigma, b] : blocks_) {
    for (std::size_t i = 0; i < b.basis.size(); ++i) {
      pm.n_x += b.basis[i].first * b.m(i, i).real();
      pm.n_y += b.basis[i].second * b.m(i, i).real();
    }
    if (wx_ == wy_) {
      // <x^dag y> couples (ix, iy) -> (ix+1, iy-1) within the block.
      for (std::size_t i = 0; i < b.basis.size(); ++i) {
        auto [ix, iy] = b.basis[i];
        if (ix + 1 < dx_ && iy >= 1) {
          auto it = pos_.at(sigma).find(ix + 1);
          if (it != pos_.at(sigma).end()) {
            pm.xdag_y += b.m(i, it->second) *
                         std::sqrt(static_cast<double>(iy) * (ix + 1.0));
          }
        }
      }
    }
  }
  return pm;
}

std::vector<double> PairBlockReducer::populations_x() const {
  std::vector<double> p(dx_, 0.0);
  for (const auto& [sigma, b] : blocks_) {
    for (std::size_t i = 0; i < b.basis.size(); ++i) p[b.basis[i].first] += b.m(i, i).real();
  }
  return p;
}

std::vector<double> PairBlockReducer::populations_y() const {
  std::vector<double> p(dy_, 0.0);
  for (const auto& [sigma, b] : blocks_) {
    for (std::size_t i = 0; i < b.basis.size(); ++i) p[b.basis[i].second] += b.m(i, i).real();
  }
  return p;
}

PairDenseReducer::PairDenseReducer(const FockSpace& space, ModeIndex mode_x, ModeIndex mode_y)
    : space_(space),
      mx_(mode_x),
      my_(mode_y),
      traced_mask_(traced_mask(space, {mode_x, mode_y})),
      dx_(space.dim(mode_x)),
      dy_(space.dim(mode_y)) {
  rho_ = Mat::Zero(static_cast<Eigen::Index>(dx_) * dy_, static_cast<Eigen::Index>(dx_) * dy_);
}

void PairDenseReducer::add_component(double weight, const Support& support) {
  for (const auto& [key, idxs] : bucket_by_mask(support, traced_mask_)) {
    for (std::uint32_t i : idxs) {
      Eigen::Index u = static_cast<Eigen::Index>(byte_of(support[i].first, mx_)) * dy_ +
                       byte_of(support[i].first, my_);
      for (std::uint32_t j : idxs) {
        Eigen::Index v = static_cast<Eigen::Index>(byte_of(support[j].first, mx_)) * dy_ +
                         byte_of(support[j].first, my_);
        rho_(u, v) += weight * support[i].second * std::conj(support[j].second);
      }
    }
  }
}

void PairDenseReducer::add_dm_block(const std::vector<std::uint64_t>& basis, const Mat& block) {
  Support fake;
  fake.reserve(basis.size());
  for (auto key : basis) fake.push_back({key, 0.0});
  for (const auto& [key, idxs] : bucket_by_mask(fake, traced_mask_)) {
    for (std::uint32_t i : idxs) {
      Eigen::Index u = static_cast<Eigen::Index>(byte_of(basis[i], mx_)) * dy_ +
                       byte_of(basis[i], my_);
      for (std::uint32_t j : idxs) {
        Eigen::Index v = static_cast<Eigen::Index>(byte_of(basis[j], mx_)) * dy_ +
                         byte_of(basis[j], my_);
        rho_(u, v) += block(i, j);
      }
    }
  }
}

}  // namespace qsplit
