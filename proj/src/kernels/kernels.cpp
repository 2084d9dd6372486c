#include "coarse/kernels.hpp"

#include <atomic>

#include "coarse/util.hpp"

namespace coarse::kernels {

const KernelTable* avx2_table();  // kernels_avx2.cpp; nullptr off x86-64

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect_default() {
    if (avx2_table() != nullptr && cpu_has_avx2()) return Backend::kAvx2;
    return Backend::kScalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> b{detect_default()};
    return b;
}

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::kScalar: return "scalar";
        case Backend::kAvx2: return "avx2";
    }
    return "unknown";
}

bool backend_available(Backend b) {
    if (b == Backend::kScalar) return true;
    return avx2_table() != nullptr && cpu_has_avx2();
}

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_available(b))
        throw config_error(std::string("kernel backend not available: ") + backend_name(b));
    backend_slot().store(b, std::memory_order_relaxed);
}

const KernelTable& table() {
    if (active_backend() == Backend::kAvx2) return *avx2_table();
    return scalar_table();
}

}  // namespace coarse::kernels
