#pragma once

namespace bnndp {

// serial is the reference path; both must produce bit-identical results.
enum class Exec { serial, parallel };

// Applies BNNDP_THREADS (if set) to the OpenMP runtime. Idempotent.
void configure_threads();
int thread_count();

}  // namespace bnndp
