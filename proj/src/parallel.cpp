#include "bnndp/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <mutex>
#include <string>

namespace bnndp {

void configure_threads() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (const char* env = std::getenv("BNNDP_THREADS")) {
      try {
        const int n = std::stoi(env);
        if (n > 0) omp_set_num_threads(n);
      } catch (...) {
        // ignored: fall back to the OpenMP default
      }
    }
  });
}

int thread_count() {
  configure_threads();
  return omp_get_max_threads();
}

}  // namespace bnndp
