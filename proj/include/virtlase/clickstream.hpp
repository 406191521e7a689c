#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace virtlase {

/// Detector clicks with 1 ns resolution. Timestamps are strictly increasing
/// and lie in [0, duration_ns).
struct ClickStream
{
    std::uint32_t detector_id = 0;
    std::vector<std::uint64_t> timestamps_ns;
    std::uint64_t duration_ns = 0;

    std::size_t size() const { return timestamps_ns.size(); }
    double duration() const { return double(duration_ns) * 1e-9; }
    double time(std::size_t i) const { return double(timestamps_ns[i]) * 1e-9; }

    /// Throws FormatError if the ordering or range invariant is broken.
    void validate() const;
};

// Binary layout, all little-endian:
//   char[4] magic "CLKS" | u32 version (1) | u32 detector_id | u64 count | u64 duration_ns
//   followed by count u64 timestamps in nanoseconds.
inline constexpr std::uint32_t clickstream_version = 1;
inline constexpr std::size_t clickstream_header_size = 28;

void write_clickstream(std::ostream& out, const ClickStream& stream);
ClickStream read_clickstream(std::istream& in);
void write_clickstream(const std::filesystem::path& path, const ClickStream& stream);
ClickStream read_clickstream(const std::filesystem::path& path);

// Text layout: optional "# detector_id N" and "# duration_ns N" comment lines,
// then one decimal nanosecond timestamp per line.
void write_clickstream_text(std::ostream& out, const ClickStream& stream);
ClickStream read_clickstream_text(std::istream& in);

} // namespace virtlase
