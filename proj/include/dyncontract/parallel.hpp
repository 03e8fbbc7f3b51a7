#pragma once

#include <cstddef>
#include <vector>

namespace dyncontract {

enum class Exec { serial, parallel };

/// Number of threads the parallel kernels will use.
int kernel_threads();
void set_kernel_threads(int n);

namespace detail {
void run_indexed(std::size_t n, const void* ctx, void (*body)(const void*, std::size_t), Exec exec);
}

/// Evaluates f(i) for i in [0,n) into slot i. The parallel path uses OpenMP with dynamic
/// scheduling; slots are written independently so the result does not depend on thread count.
template <class R, class F>
std::vector<R> indexed_map(std::size_t n, F&& f, Exec exec = Exec::parallel) {
    std::vector<R> out(n);
    struct Ctx {
        std::vector<R>* out;
        F* f;
    } ctx{&out, &f};
    detail::run_indexed(
        n, &ctx,
        [](const void* c, std::size_t i) {
            auto* x = static_cast<const Ctx*>(c);
            (*x->out)[i] = (*x->f)(i);
        },
        exec);
    return out;
}

} // namespace dyncontract
