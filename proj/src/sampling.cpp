#include "cabo/sampling.hpp"

#include <boost/random/sobol.hpp>

namespace cabo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ScrambledSobol::ScrambledSobol(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), shift_(dimension) {
  std::mt19937_64 rng(derive_seed({seed, 0x50b01ULL}));
  for (auto& s : shift_) s = rng();
}

Eigen::MatrixXd ScrambledSobol::points(std::size_t count) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dimension_));
  boost::random::sobol engine(dimension_);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < dimension_; ++k) {
      const std::uint64_t v = engine() ^ shift_[k];
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          static_cast<double>(v >> 11) * 0x1.0p-53;
    }
  }
  return out;
}

Eigen::VectorXd ScrambledSobol::point(std::size_t index) const {
  boost::random::sobol engine(dimension_);
  engine.discard(static_cast<boost::uintmax_t>(index) * dimension_);
  Eigen::VectorXd out(static_cast<Eigen::Index>(dimension_));
  for (std::size_t k = 0; k < dimension_; ++k) {
    const std::uint64_t v = engine() ^ shift_[k];
    out[static_cast<Eigen::Index>(k)] = static_cast<double>(v >> 11) * 0x1.0p-53;
  }
  return out;
}

}  // namespace cabo
