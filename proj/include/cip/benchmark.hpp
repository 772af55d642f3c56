#ifndef CIP_BENCHMARK_HPP
#define CIP_BENCHMARK_HPP

#include "cip/data.hpp"
#include "cip/trainer.hpp"

#include <cstdint>
#include <string_view>

namespace cip {

// Fixed desk-scale benchmarks shared by the acceptance suite and the CLI.
//
// standard: K=10 classes, 16-d views, 120 objects of 12 views per class,
//   unit separation and 0.3 noise; encoder 16 -> 32 -> 16, He init, plain
//   SGD at lr 0.003 with the usual drop at epoch 20.
// geometry: K=6, n=3, 40 objects per class, noise 0.15, lr 0.01 schedule,
//   collapse detector off so every run finishes its 30 epochs.

SyntheticSpec standard_benchmark_data(std::uint64_t seed);
TrainConfig standard_benchmark_train(std::uint64_t seed, std::string_view loss = "cip");

SyntheticSpec geometry_benchmark_data(std::uint64_t seed);
TrainConfig geometry_benchmark_train(std::uint64_t seed);

}  // namespace cip

#endif  // CIP_BENCHMARK_HPP
