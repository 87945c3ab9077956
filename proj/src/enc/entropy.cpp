#include "iotaudit/enc/entropy.hpp"

#include "iotaudit/core/error.hpp"

#include <array>
#include <cmath>

namespace iotaudit::enc {

double payload_entropy(ByteView payload) {
    if (payload.empty()) throw PreconditionError("entropy of an empty payload");
    std::array<std::size_t, 256> counts{};
    for (auto b : payload) ++counts[b];
    const double n = static_cast<double>(payload.size());
    double h = 0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    h /= 8.0;
    if (h < 0) h = 0;
    if (h > 1) h = 1;
    return h;
}

} // namespace iotaudit::enc
