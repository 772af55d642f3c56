#include "cip/benchmark.hpp"

namespace cip {

SyntheticSpec standard_benchmark_data(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 10;
  s.objects_per_class = 120;
  s.views_per_object = 12;
  s.input_dim = 16;
  s.class_separation = 1.0;
  s.view_noise_std = 0.3;
  s.object_noise_std = 0.3;
  s.seed = seed;
  return s;
}

TrainConfig standard_benchmark_train(std::uint64_t seed, std::string_view loss) {
  TrainConfig c;
  c.seed = seed;
  c.loss = loss_preset(loss);
  c.hidden_dims = {32};
  c.embedding_dim = 16;
  c.init = InitScheme::he;
  c.momentum = 0.0;
  c.lr0 = 0.003;
  return c;
}

SyntheticSpec geometry_benchmark_data(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 6;
  s.objects_per_class = 40;
  s.views_per_object = 12;
  s.input_dim = 16;
  s.class_separation = 1.0;
  s.view_noise_std = 0.15;
  s.object_noise_std = 0.15;
  s.seed = seed;
  return s;
}

TrainConfig geometry_benchmark_train(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.loss = loss_preset("cip");
  c.hidden_dims = {32};
  c.embedding_dim = 3;
  c.init = InitScheme::he;
  c.momentum = 0.0;
  c.collapse_cosine = 1.0;
  return c;
}

}  // namespace cip
