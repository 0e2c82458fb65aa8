#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "sensa/log.hpp"

int main(int argc, char** argv) {
  sensa::set_log_level(sensa::LogLevel::Quiet);
  doctest::Context context(argc, argv);
  return context.run();
}
