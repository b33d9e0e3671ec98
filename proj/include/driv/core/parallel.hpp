#pragma once

namespace driv {

// Worker-thread count for all OpenMP kernels. 0 = library default.
// Kernels only ever split independent output slices across threads and keep
// every floating-point reduction inside a single thread, so results are
// bit-identical for any thread count.
void set_thread_count(int n);
int thread_count();

}  // namespace driv
