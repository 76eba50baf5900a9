#include "commands.hpp"

#include <cstdlib>

int main(int argc, char** argv) {
  return svclab::cli::run(argc, argv, [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  });
}
