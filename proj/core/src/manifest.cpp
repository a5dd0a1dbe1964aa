#include "ecn/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ecn/errors.hpp"

namespace ecn {

const std::vector<ManifestEntry>& Manifest::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw UsageError("unknown split '" + std::string(name) + "' (expected train, val, test)");
}

Manifest parse_manifest(std::string_view text, const std::string& base_dir) {
  Manifest m;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 tab-separated fields (split, image, mask), got " +
                                    std::to_string(fields.size()));
    }
    for (const std::string& f : fields) {
      if (f.empty()) throw ParseError(line_no, "empty field");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      if (base_dir.empty() || path.is_absolute()) return p;
      return (std::filesystem::path(base_dir) / path).string();
    };
    ManifestEntry e{path_stem(fields[1]), resolve(fields[1]), resolve(fields[2]), line_no};
    if (!ids.insert(e.id).second) throw ParseError(line_no, "duplicate sample id '" + e.id + "'");
    if (fields[0] == "train") m.train.push_back(std::move(e));
    else if (fields[0] == "val") m.val.push_back(std::move(e));
    else if (fields[0] == "test") m.test.push_back(std::move(e));
    else throw ParseError(line_no, "unknown split '" + fields[0] + "'");
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open manifest");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str(), std::filesystem::path(path).parent_path().string());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot write manifest");
  auto emit = [&](const char* split, const std::vector<ManifestEntry>& entries) {
    for (const ManifestEntry& e : entries) out << split << '\t' << e.image << '\t' << e.mask << '\n';
  };
  emit("train", m.train);
  emit("val", m.val);
  emit("test", m.test);
  if (!out) throw IoError(path, "write failed");
}

std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries, std::size_t height,
                                 std::size_t width) {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    Sample s = load_sample(e.image, e.mask);
    s.id = e.id;
    if (s.image.shape().h != height || s.image.shape().w != width) {
      s.image = resize_bilinear(s.image, height, width);
      s.mask = resize_nearest(s.mask, height, width);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ecn
