#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fkdmc {

enum class StreamRole : std::uint64_t {
  kTrajectory = 1,
  kIndependentCopy = 2,
};

inline std::string_view to_string(StreamRole role) {
  switch (role) {
    case StreamRole::kTrajectory:
      return "trajectory";
    case StreamRole::kIndependentCopy:
      return "independent-copy";
  }
  return "unknown";
}

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed for (master_seed, replication_index, role).
constexpr std::uint64_t derive_seed(std::uint64_t master_seed,
                                    std::uint64_t replication_index,
                                    StreamRole role) {
  std::uint64_t s = splitmix64(master_seed);
  s = splitmix64(s ^ replication_index);
  return splitmix64(s ^ static_cast<std::uint64_t>(role));
}

/*!
  Random stream owned by a single trajectory.

  Satisfies UniformRandomBitGenerator so it plugs straight into the standard
  distributions. Identical (master_seed, replication_index, role) triples
  replay identical draws.
*/
class RngStream {
 public:
  using result_type = std::mt19937_64::result_type;

  RngStream(std::uint64_t master_seed, std::uint64_t replication_index,
            StreamRole role = StreamRole::kTrajectory)
      : master_seed_(master_seed),
        replication_index_(replication_index),
        role_(role),
        engine_(derive_seed(master_seed, replication_index, role)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return unit_(engine_); }
  double normal() { return gauss_(engine_); }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t replication_index() const { return replication_index_; }
  StreamRole role() const { return role_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t replication_index_;
  StreamRole role_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace fkdmc
