#include "virtlase/clickstream.hpp"
#include "virtlase/errors.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace virtlase {

namespace {

template <typename T>
void put_le(std::ostream& out, T value)
{
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what)
{
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
        throw FormatError(std::string("clickstream: truncated ") + what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        value |= T(bytes[i]) << (8 * i);
    return value;
}

std::uint64_t parse_u64(std::string_view text, const char* what)
{
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw FormatError(std::string("clickstream text: bad ") + what + " '" + std::string(text) + "'");
    return v;
}

} // namespace

void ClickStream::validate() const
{
    for (std::size_t i = 1; i < timestamps_ns.size(); ++i)
        if (timestamps_ns[i] <= timestamps_ns[i - 1])
            throw FormatError("clickstream: timestamps not strictly increasing at index " + std::to_string(i));
    if (!timestamps_ns.empty() && timestamps_ns.back() >= duration_ns)
        throw FormatError("clickstream: timestamp beyond stream duration");
}

void write_clickstream(std::ostream& out, const ClickStream& stream)
{
    stream.validate();
    out.write("CLKS", 4);
    put_le<std::uint32_t>(out, clickstream_version);
    put_le<std::uint32_t>(out, stream.detector_id);
    put_le<std::uint64_t>(out, stream.timestamps_ns.size());
    put_le<std::uint64_t>(out, stream.duration_ns);
    for (std::uint64_t t : stream.timestamps_ns)
        put_le<std::uint64_t>(out, t);
    if (!out)
        throw FormatError("clickstream: write failed");
}

ClickStream read_clickstream(std::istream& in)
{
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CLKS", 4) != 0)
        throw FormatError("clickstream: bad magic (expected CLKS)");
    const auto version = get_le<std::uint32_t>(in, "version");
    if (version != clickstream_version)
        throw FormatError("clickstream: unsupported version " + std::to_string(version));
    ClickStream s;
    s.detector_id = get_le<std::uint32_t>(in, "detector id");
    const auto count = get_le<std::uint64_t>(in, "count");
    s.duration_ns = get_le<std::uint64_t>(in, "duration");
    if (count > (std::uint64_t{1} << 40))
        throw FormatError("clickstream: implausible record count");
    s.timestamps_ns.resize(count);
    for (auto& t : s.timestamps_ns)
        t = get_le<std::uint64_t>(in, "timestamp");
    if (in.peek() != std::char_traits<char>::eof())
        throw FormatError("clickstream: trailing bytes after last record");
    s.validate();
    return s;
}

void write_clickstream(const std::filesystem::path& path, const ClickStream& stream)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("clickstream: cannot open " + path.string());
    write_clickstream(out, stream);
}

ClickStream read_clickstream(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("clickstream: cannot open " + path.string());
    return read_clickstream(in);
}

void write_clickstream_text(std::ostream& out, const ClickStream& stream)
{
    stream.validate();
    out << "# detector_id " << stream.detector_id << "\n# duration_ns " << stream.duration_ns << "\n";
    for (std::uint64_t t : stream.timestamps_ns)
        out << t << '\n';
}

ClickStream read_clickstream_text(std::istream& in)
{
    ClickStream s;
    bool have_duration = false;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line[0] == '#') {
            const std::string_view body = std::string_view(line).substr(1);
            const auto word_start = body.find_first_not_of(' ');
            if (word_start == std::string_view::npos)
                continue;
            const auto rest = body.substr(word_start);
            const auto space = rest.find(' ');
            const auto key = rest.substr(0, space);
            const auto value = space == std::string_view::npos ? std::string_view{} : rest.substr(space + 1);
            if (key == "detector_id")
                s.detector_id = static_cast<std::uint32_t>(parse_u64(value, "detector id"));
            else if (key == "duration_ns") {
                s.duration_ns = parse_u64(value, "duration");
                have_duration = true;
            }
            continue;
        }
        s.timestamps_ns.push_back(parse_u64(line, "timestamp"));
    }
    if (!have_duration)
        s.duration_ns = s.timestamps_ns.empty() ? 0 : s.timestamps_ns.back() + 1;
    s.validate();
    return s;
}

} // namespace virtlase
