#include "dyncontract/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dyncontract {

namespace {
int g_threads = 1;
}

int kernel_threads() { return g_threads; }

void set_kernel_threads(int n) { g_threads = std::max(1, n); }

namespace detail {

void run_indexed(std::size_t n, const void* ctx, void (*body)(const void*, std::size_t), Exec exec) {
    if (exec == Exec::serial || g_threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i)
            body(ctx, i);
        return;
    }
    // Keep the exception of the lowest failing index so errors are reproducible too.
    std::exception_ptr first;
    std::size_t first_index = n;
    std::mutex m;
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(g_threads)
    for (long long i = 0; i < nn; ++i) {
        try {
            body(ctx, static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard<std::mutex> lock(m);
            if (static_cast<std::size_t>(i) < first_index) {
                first_index = static_cast<std::size_t>(i);
                first = std::current_exception();
            }
        }
    }
    if (first)
        std::rethrow_exception(first);
}

} // namespace detail
} // namespace dyncontract
