#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "core.hpp"

namespace gridsafe {

using Checksum = std::uint32_t;

/// Canonical dataset checksum: CRC-32 (zlib) over the text
/// "<run_id>|<chunk_0>,<chunk_1>,...|<size>|<nonce>".
inline Checksum dataset_checksum(const std::string& run_id, const std::vector<std::string>& chunk_ids,
                                 Bytes size, std::uint64_t nonce) {
    std::string canon = run_id;
    canon += '|';
    for (std::size_t i = 0; i < chunk_ids.size(); ++i) {
        if (i) canon += ',';
        canon += chunk_ids[i];
    }
    canon += '|';
    canon += std::to_string(size);
    canon += '|';
    canon += std::to_string(nonce);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(canon.data()), static_cast<uInt>(canon.size()));
    return static_cast<Checksum>(crc);
}

/// The value stored when corruption is injected; never equals `good`.
constexpr Checksum corrupted(Checksum good) { return ~good; }

}  // namespace gridsafe
