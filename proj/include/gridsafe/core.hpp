#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridsafe {

using Seconds = std::int64_t;
using Bytes = std::int64_t;

inline constexpr Seconds kHour = 3600;
inline constexpr Seconds kDay = 86400;
inline constexpr Seconds kForever = std::numeric_limits<Seconds>::max();

/// Error categories surfaced by every module. Names match the contract
/// error identifiers so they can be printed and compared directly.
enum class Errc {
    SCHEDULE_IN_PAST,
    UNKNOWN_RSE,
    UNKNOWN_SITE,
    DUPLICATE_DATASET,
    INSUFFICIENT_CAPACITY,
    INVALID_RULE,
    NO_SOURCE_REPLICA,
    NO_PENDING_TRANSFER,
    UNKNOWN_DATASET,
    UNKNOWN_RUN,
    ILLEGAL_TRANSITION,
    ILLEGAL_LOCATION,
    ALREADY_ARCHIVED,
    SOURCE_MISSING,
    NOT_ARCHIVED,
    NOT_VERIFIED,
    NO_REPLICA_AT_RSE,
    PURGE_REFUSED,
    NO_REPLICA,
    EMPTY_DATASET,
    DAG_FAILED,
    MISSING_CHUNK_OUTPUT,
    TRANSFER_FAILED,
    NOT_PROCESSED,
    PARSE_ERROR,
    SEMANTIC_ERROR,
};

inline constexpr std::string_view to_string(Errc e) {
    constexpr std::array<std::string_view, 26> names{
        "SCHEDULE_IN_PAST", "UNKNOWN_RSE", "UNKNOWN_SITE", "DUPLICATE_DATASET",
        "INSUFFICIENT_CAPACITY", "INVALID_RULE", "NO_SOURCE_REPLICA", "NO_PENDING_TRANSFER",
        "UNKNOWN_DATASET", "UNKNOWN_RUN", "ILLEGAL_TRANSITION", "ILLEGAL_LOCATION",
        "ALREADY_ARCHIVED", "SOURCE_MISSING", "NOT_ARCHIVED", "NOT_VERIFIED",
        "NO_REPLICA_AT_RSE", "PURGE_REFUSED", "NO_REPLICA", "EMPTY_DATASET",
        "DAG_FAILED", "MISSING_CHUNK_OUTPUT", "TRANSFER_FAILED", "NOT_PROCESSED",
        "PARSE_ERROR", "SEMANTIC_ERROR"};
    return names[static_cast<std::size_t>(e)];
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Enumerations shared across modules, with text conversion for the
// scenario format and the JSON dumps.

enum class Region { LNGS, EUROPE, US, NORDIC };
enum class StorageKind { BUFFER, DISK, TAPE, ANALYSIS };
enum class Pool { OSG, EGI, LOCAL };

/// Data-taking source categories (one row each in the accounting report).
enum class Source {
    DARK_MATTER,
    LED,
    CS137,
    KR83M,
    RN220,
    AMBE241,
    TH228,
    NEUTRON_GENERATOR,
    MUON_VETO,
};

inline constexpr std::array<Source, 9> kAllSources{
    Source::DARK_MATTER, Source::LED,     Source::CS137,
    Source::KR83M,       Source::RN220,   Source::AMBE241,
    Source::TH228,       Source::NEUTRON_GENERATOR, Source::MUON_VETO};

namespace detail {

template <typename E, std::size_t N>
constexpr std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == s) return static_cast<E>(i);
    return std::nullopt;
}

inline constexpr std::array<std::string_view, 4> kRegionNames{"LNGS", "EUROPE", "US", "NORDIC"};
inline constexpr std::array<std::string_view, 4> kKindNames{"BUFFER", "DISK", "TAPE", "ANALYSIS"};
inline constexpr std::array<std::string_view, 3> kPoolNames{"OSG", "EGI", "LOCAL"};
inline constexpr std::array<std::string_view, 9> kSourceNames{
    "DARK_MATTER", "LED", "CS137", "KR83M", "RN220",
    "AMBE241", "TH228", "NEUTRON_GENERATOR", "MUON_VETO"};

}  // namespace detail

inline constexpr std::string_view to_string(Region r) { return detail::kRegionNames[static_cast<std::size_t>(r)]; }
inline constexpr std::string_view to_string(StorageKind k) { return detail::kKindNames[static_cast<std::size_t>(k)]; }
inline constexpr std::string_view to_string(Pool p) { return detail::kPoolNames[static_cast<std::size_t>(p)]; }
inline constexpr std::string_view to_string(Source s) { return detail::kSourceNames[static_cast<std::size_t>(s)]; }

inline std::optional<Region> parse_region(std::string_view s) { return detail::lookup<Region>(detail::kRegionNames, s); }
inline std::optional<StorageKind> parse_kind(std::string_view s) { return detail::lookup<StorageKind>(detail::kKindNames, s); }
inline std::optional<Pool> parse_pool(std::string_view s) { return detail::lookup<Pool>(detail::kPoolNames, s); }
inline std::optional<Source> parse_source(std::string_view s) { return detail::lookup<Source>(detail::kSourceNames, s); }

/// Scales `value` by a parts-per-million ratio, rounding down. Exact for
/// every int64 input.
inline Bytes scale_ppm(Bytes value, std::int64_t ppm) {
    return static_cast<Bytes>(static_cast<__int128>(value) * ppm / 1'000'000);
}

}  // namespace gridsafe
