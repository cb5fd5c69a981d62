#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "spncf/circuit.hpp"

namespace spncf {

// Versioned JSON model document. Reals are written with enough digits for
// exact double round-trip; -inf log-weights and log-priors are written as null.
std::string to_json_string(const Circuit& circuit);
Circuit circuit_from_json_string(const std::string& text);

void save(const Circuit& circuit, std::ostream& out);
void save(const Circuit& circuit, const std::filesystem::path& path);

// Throws FormatError on malformed input, VersionMismatchError on an unknown
// format_version and ValidationError if the parsed circuit is invalid.
Circuit load(std::istream& in);
Circuit load(const std::filesystem::path& path);

}  // namespace spncf
