#include "flowlab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace flowlab {

std::size_t thread_count() {
    static const std::size_t count = [] {
        std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("FLOWLAB_THREADS")) {
            try {
                const long cap = std::stol(env);
                if (cap >= 1) return std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
            } catch (...) {
            }
        }
        return hw;
    }();
    return count;
}

}  // namespace flowlab
