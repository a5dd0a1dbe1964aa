#pragma once

// Tab-separated dataset manifest: one "split<TAB>image<TAB>mask" record per
// line, split in {train, val, test}. Blank lines and '#' comments are skipped.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ecn/image_io.hpp"

namespace ecn {

struct ManifestEntry {
  std::string id;  // image file stem, unique across the manifest
  std::string image;
  std::string mask;
  std::size_t line = 0;
};

struct Manifest {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
  std::vector<ManifestEntry> test;

  const std::vector<ManifestEntry>& split(std::string_view name) const;
};

/// Relative paths are resolved against `base_dir` when it is non-empty.
/// Throws ParseError naming the line of a malformed record or duplicate id.
Manifest parse_manifest(std::string_view text, const std::string& base_dir = "");

/// Paths are resolved relative to the manifest's directory.
Manifest load_manifest(const std::string& path);

void write_manifest(const Manifest& manifest, const std::string& path);

/// Loads each pair and resizes it (image bilinear, mask nearest) to height x width.
std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries, std::size_t height,
                                 std::size_t width);

}  // namespace ecn
