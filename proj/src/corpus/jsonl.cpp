#include "focusmix/corpus/jsonl.hpp"

#include <fstream>
#include <json.hpp>

#include "focusmix/error.hpp"

namespace focusmix::corpus {
namespace {

using json = nlohmann::ordered_json;

Tokens tokens_from(const json& j, const char* what) {
  if (!j.is_array()) throw InputError(std::string(what) + " must be an array of strings");
  Tokens out;
  for (const auto& t : j) {
    if (!t.is_string()) throw InputError(std::string(what) + " must be an array of strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

}  // namespace

Record record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  if (!j.is_object()) throw ParseError("expected a JSON object");
  if (!j.contains("source")) throw InputError("missing field 'source'");
  if (!j.contains("targets")) throw InputError("missing field 'targets'");

  Record r;
  r.source = tokens_from(j["source"], "source");
  if (!j["targets"].is_array()) throw InputError("targets must be an array");
  for (const auto& y : j["targets"]) r.targets.push_back(tokens_from(y, "target"));

  if (j.contains("answer_span")) {
    const auto& s = j["answer_span"];
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned())
      throw InputError("answer_span must be [start, end] with non-negative integers");
    r.answer_span = AnswerSpan{s[0].get<std::size_t>(), s[1].get<std::size_t>()};
  }
  if (j.contains("focus_guides")) {
    const auto& gs = j["focus_guides"];
    if (!gs.is_array()) throw InputError("focus_guides must be an array");
    std::vector<FocusGuide> guides;
    for (const auto& g : gs) {
      if (!g.is_array()) throw InputError("each focus guide must be an array");
      FocusGuide fg;
      for (const auto& b : g) {
        if (!b.is_number_unsigned() || b.get<unsigned>() > 1)
          throw InputError("focus guide values must be 0 or 1");
        fg.bits.push_back(static_cast<std::uint8_t>(b.get<unsigned>()));
      }
      guides.push_back(std::move(fg));
    }
    r.focus_guides = std::move(guides);
  }
  r.validate();
  return r;
}

std::string record_to_json_line(const Record& record) {
  json j;
  j["source"] = record.source;
  j["targets"] = record.targets;
  if (record.answer_span) j["answer_span"] = {record.answer_span->start, record.answer_span->end};
  if (record.focus_guides) {
    json gs = json::array();
    for (const auto& g : *record.focus_guides) {
      json bits = json::array();
      for (auto b : g.bits) bits.push_back(static_cast<int>(b));
      gs.push_back(std::move(bits));
    }
    j["focus_guides"] = std::move(gs);
  }
  return j.dump();
}

std::vector<Record> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      out.push_back(record_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::vector<Record>& records, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write " + tmp.string());
    for (const auto& r : records) out << record_to_json_line(r) << '\n';
    if (!out) throw FileError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace focusmix::corpus
