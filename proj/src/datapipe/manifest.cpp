#include "slicevlp/datapipe/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::data {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SampleKind kind) noexcept { return kind == SampleKind::k2d ? "2d" : "3d"; }

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

SampleKind parse_sample_kind(std::string_view text) {
  if (text == "2d") return SampleKind::k2d;
  if (text == "3d") return SampleKind::k3d;
  throw InputError("unknown sample kind '" + std::string(text) + "' (expected 2d or 3d)");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw InputError("unknown split '" + std::string(text) + "' (expected train, val or test)");
}

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset; ++i) line += text[i] == '\n';
  return line;
}

// Best-effort line of the n-th entry: the n-th '{' at nesting depth 1.
std::vector<std::size_t> entry_lines(std::string_view text) {
  std::vector<std::size_t> lines;
  int depth = 0;
  bool in_string = false;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') ++line;
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[' || c == '{') {
      if (depth == 1 && c == '{') lines.push_back(line);
      ++depth;
    } else if (c == ']' || c == '}') --depth;
  }
  return lines;
}

std::string required_string(const json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end()) throw InputError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw InputError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

ManifestEntry entry_from_json(const json& rec) {
  if (!rec.is_object()) throw InputError("entry must be an object");
  ManifestEntry e;
  e.id = required_string(rec, "id");
  e.path = required_string(rec, "path");
  e.kind = parse_sample_kind(required_string(rec, "kind"));
  e.body_region = required_string(rec, "body_region");
  e.modality = required_string(rec, "modality");
  if (auto it = rec.find("condition"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) throw InputError("field 'condition' must be a string or null");
    e.condition = it->get<std::string>();
  }
  auto label = rec.find("label");
  if (label == rec.end() || !label->is_number_integer()) {
    throw InputError("field 'label' must be an integer");
  }
  e.label = label->get<std::int64_t>();
  if (e.label < 0) throw InputError("label must be >= 0, got " + std::to_string(e.label));
  e.split = parse_split(required_string(rec, "split"));
  if (e.id.empty()) throw InputError("id must be non-empty");
  if (e.path.empty()) throw InputError("path must be non-empty");
  return e;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError("manifest line " + std::to_string(line_of_offset(text, e.byte)) +
                    ": parse error: " + e.what());
  }
  if (!doc.is_array()) throw LoadError("manifest line 1: top level must be a list of entries");
  const auto lines = entry_lines(text);
  auto where = [&](std::size_t i) {
    const std::size_t line = i < lines.size() ? lines[i] : 1;
    return "manifest line " + std::to_string(line) + " (entry " + std::to_string(i) + ")";
  };
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    ManifestEntry e;
    try {
      e = entry_from_json(doc[i]);
    } catch (const InputError& err) {
      throw LoadError(where(i) + ": " + err.what());
    }
    if (!seen.insert(e.id).second) throw LoadError(where(i) + ": duplicate id '" + e.id + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string manifest_to_json(const std::vector<ManifestEntry>& entries) {
  json doc = json::array();
  for (const auto& e : entries) {
    json rec = json::object();
    rec["id"] = e.id;
    rec["path"] = e.path;
    rec["kind"] = to_string(e.kind);
    rec["body_region"] = e.body_region;
    rec["modality"] = e.modality;
    rec["condition"] = e.condition ? json(*e.condition) : json(nullptr);
    rec["label"] = e.label;
    rec["split"] = to_string(e.split);
    doc.push_back(std::move(rec));
  }
  return doc.dump(2) + "\n";
}

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  auto entries = parse_manifest(text);
  const auto lines = entry_lines(text);
  const fs::path root = path.parent_path();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!fs::is_regular_file(root / entries[i].path)) {
      const std::size_t line = i < lines.size() ? lines[i] : 1;
      throw LoadError("manifest line " + std::to_string(line) + " (entry " + std::to_string(i) +
                      "): sample file not found: " + entries[i].path);
    }
  }
  return entries;
}

void save_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write manifest " + path.string());
  out << manifest_to_json(entries);
  if (!out) throw LoadError("failed writing manifest " + path.string());
}

fs::path resolve_manifest_path(const fs::path& data) {
  if (fs::is_directory(data)) return data / "manifest.json";
  return data;
}

}  // namespace slicevlp::data
