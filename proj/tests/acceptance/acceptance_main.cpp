// Acceptance suite: run all criteria or a single one by number.

#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "acceptance.hpp"

int main(int argc, char** argv) {
  using namespace longctx::acceptance;
  bool (*criteria[])() = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                          criterion_6, criterion_7, criterion_8, criterion_9};
  const int n = static_cast<int>(sizeof(criteria) / sizeof(criteria[0]));

  if (argc > 1) {
    const int which = std::atoi(argv[1]);
    if (which < 1 || which > n) {
      std::fprintf(stderr, "usage: %s [1..%d]\n", argv[0], n);
      return 2;
    }
    return criteria[which - 1]() ? 0 : 1;
  }
  bool all_ok = true;
  for (int i = 0; i < n; ++i) all_ok = criteria[i]() && all_ok;
  return all_ok ? 0 : 1;
}
