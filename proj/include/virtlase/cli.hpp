#pragma once

#include "virtlase/config.hpp"
#include "virtlase/gain.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace virtlase::cli {

enum ExitCode : int { ok = 0, usage = 2, physics = 3, integrity = 4 };

/// Entry point of the `virtlase` executable. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Calibration file: constants plus the hash of the config they belong to.
struct CalibrationRecord
{
    CalibrationConstants constants;
    std::uint64_t config_hash = 0;
    std::string version;
};

std::string format_calibration(const CalibrationRecord& record, const RunConfig& config);
/// Throws FormatError for malformed files and IntegrityError when the embedded
/// checksum does not match the content.
CalibrationRecord parse_calibration(const std::string& text);

/// Row of the selection-rule table: field label, pump label and the field and
/// pump polarizations it stands for.
struct TableRow
{
    std::string field_label;
    std::string pump_label;
    Vec3 field = Vec3::Zero();
    std::vector<Jones> pump; // all must give the same row
};

std::vector<TableRow> standard_table_rows();
std::string render_polarization_table(const std::vector<TableRow>& rows);

std::uint64_t fnv1a(const std::string& bytes);

} // namespace virtlase::cli
