#include "cellokit/kernels.hpp"
#include "cellokit/error.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace cellokit::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa detect() {
    if (const char* env = std::getenv("CELLOKIT_ISA")) {
        const std::string value(env);
        if (value == "scalar") {
            return Isa::Scalar;
        }
        if (value == "avx2" && isa_supported(Isa::Avx2)) {
            return Isa::Avx2;
        }
    }
    return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{&table(detect())};
    return slot;
}

} // namespace

std::string_view to_string(Isa isa) {
    switch (isa) {
    case Isa::Scalar:
        return "scalar";
    case Isa::Avx2:
        return "avx2";
    }
    return "unknown";
}

bool isa_supported(Isa isa) {
    switch (isa) {
    case Isa::Scalar:
        return true;
    case Isa::Avx2:
        return avx2_table() != nullptr && cpu_has_avx2_fma();
    }
    return false;
}

const KernelTable& table(Isa isa) {
    if (!isa_supported(isa)) {
        throw Error(ErrorKind::InvalidArgument, "kernel variant " + std::string(to_string(isa)) + " is not supported on this CPU");
    }
    return isa == Isa::Avx2 ? *avx2_table() : scalar_table();
}

const KernelTable& active() {
    return *active_slot().load(std::memory_order_acquire);
}

Isa active_isa() {
    return &active() == &scalar_table() ? Isa::Scalar : Isa::Avx2;
}

void force_isa(Isa isa) {
    active_slot().store(&table(isa), std::memory_order_release);
}

} // namespace cellokit::kernels
