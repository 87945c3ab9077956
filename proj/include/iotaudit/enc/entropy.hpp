#pragma once

#include "iotaudit/core/bytes.hpp"

namespace iotaudit::enc {

/// Shannon entropy of the byte histogram in bits, divided by 8. In [0, 1].
/// Throws PreconditionError on an empty payload.
double payload_entropy(ByteView payload);

} // namespace iotaudit::enc
