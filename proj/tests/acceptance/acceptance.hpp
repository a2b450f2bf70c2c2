#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

namespace longctx::acceptance {

class Check {
 public:
  Check(int criterion, std::string name) : criterion_(criterion), name_(std::move(name)) {
    start_ = std::chrono::steady_clock::now();
  }

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok_ = false;
      notes_.push_back("FAILED: " + what);
    }
  }

  void note(const std::string& what) { notes_.push_back(what); }

  // Prints the one pass/fail line for this criterion.
  bool finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::printf("[%s] criterion %d: %s (%.1fs)\n", ok_ ? "PASS" : "FAIL", criterion_,
                name_.c_str(), secs);
    for (const std::string& n : notes_) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    return ok_;
  }

 private:
  int criterion_;
  std::string name_;
  bool ok_ = true;
  std::vector<std::string> notes_;
  std::chrono::steady_clock::time_point start_;
};

bool criterion_1();
bool criterion_2();
bool criterion_3();
bool criterion_4();
bool criterion_5();
bool criterion_6();
bool criterion_7();
bool criterion_8();
bool criterion_9();

}  // namespace longctx::acceptance
