#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace cabo {

// SplitMix64 finalizer; mixes `parts` into one well-spread seed.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// Uniform double in [0, 1) from the top 53 bits of one engine draw, so the
// stream is identical across standard libraries.
double uniform01(std::mt19937_64& rng);

// Sobol sequence on [0,1)^d randomized by a seeded digital shift (XOR of each
// coordinate with a fixed random word). Point i is reproducible for a given
// (dimension, seed).
class ScrambledSobol {
 public:
  ScrambledSobol(std::size_t dimension, std::uint64_t seed);

  // First `count` points, one per row.
  Eigen::MatrixXd points(std::size_t count) const;
  Eigen::VectorXd point(std::size_t index) const;

 private:
  std::size_t dimension_;
  std::vector<std::uint64_t> shift_;
};

}  // namespace cabo
