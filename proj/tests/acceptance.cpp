// One line per acceptance criterion; exit status 1 if any fails.
#include <iostream>

#include "miras/verify.hpp"

int main() {
  const miras::verify::VerifyOptions opt{MIRAS_CONFIG_DIR "/default.json", MIRAS_CONFIG_DIR "/pq_sweep.json", 1};
  int failed = 0;
  for (const auto& r : miras::verify::run_all(opt)) {
    std::cout << miras::verify::format_line(r) << "\n";
    failed += !r.passed;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("10/10 criteria passed")) << "\n";
  return failed ? 1 : 0;
}
