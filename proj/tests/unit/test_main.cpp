#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>
#include <torch/torch.h>

#include <cstdlib>

#include "starnet/log.hpp"

int main(int argc, char** argv) {
  // Tests run against the seeded fallback extractor.
  unsetenv("STARNET_VGG16_WEIGHTS");
  torch::set_num_threads(1);
  starnet::log::set_level(starnet::log::Level::warn);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
