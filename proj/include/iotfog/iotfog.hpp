#ifndef IOTFOG_IOTFOG_HPP
#define IOTFOG_IOTFOG_HPP

#include "iotfog/bytes.hpp"
#include "iotfog/clock.hpp"
#include "iotfog/consensus.hpp"
#include "iotfog/discovery.hpp"
#include "iotfog/fognet.hpp"
#include "iotfog/harness.hpp"
#include "iotfog/identity.hpp"
#include "iotfog/ledger.hpp"
#include "iotfog/messages.hpp"
#include "iotfog/node.hpp"
#include "iotfog/transaction.hpp"

namespace iotfog {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace iotfog

#endif  // IOTFOG_IOTFOG_HPP
