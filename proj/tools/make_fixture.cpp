// Regenerates the bundled test fixture. Usage:
//   make_fixture --out tests/data/fixture [--queries 50] [--seed 7]

#include <iostream>

#include <CLI11.hpp>

#include "fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write the synthetic caption-reranking fixture"};
  fixture::Config cfg;
  std::string out;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--queries", cfg.queries)->capture_default_str();
  app.add_option("--collection", cfg.collection)->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fixture::generate(cfg, out);
  std::cout << "wrote " << out << '\n';
  return 0;
}
