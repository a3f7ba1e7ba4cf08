// One PASS/FAIL line per acceptance criterion; the individual checks follow
// indented. Exit status is non-zero when any criterion fails.
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>

#include "fasep/experiments.hpp"

int main(int argc, char** argv) {
  fasep::AcceptanceOptions opt;
  if (const char* s = std::getenv("FASEP_ACCEPTANCE_SEED")) opt.seed = std::stoull(s);
  int first = 1, last = fasep::kAcceptanceCount;
  if (argc == 2) first = last = std::stoi(argv[1]);

  int failed = 0;
  for (int id = first; id <= last; ++id) {
    fasep::AcceptanceResult r;
    try {
      r = fasep::acceptance_criterion(id, opt);
    } catch (const std::exception& e) {
      r.id = id;
      r.title = std::string("threw: ") + e.what();
      r.pass = false;
    }
    std::cout << (r.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << id << "  " << r.title << "  ("
              << std::fixed << std::setprecision(1) << r.seconds << " s)" << std::defaultfloat << std::setprecision(6)
              << std::endl;
    for (const auto& c : r.checks) {
      std::cout << "      " << (c.pass ? "ok   " : "FAIL ") << c.name << ": " << fasep::num(c.estimate) << " vs "
                << fasep::num(c.target);
      if (c.stderr_ > 0) std::cout << " (stderr " << fasep::num(c.stderr_) << ")";
      if (!c.detail.empty()) std::cout << " [" << c.detail << "]";
      std::cout << '\n';
    }
    failed += !r.pass;
  }
  return failed ? 1 : 0;
}
