#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "focusmix/corpus/record.hpp"

namespace focusmix::corpus {

// One JSON object per line:
//   {"source": [str], "targets": [[str], ...], "answer_span": [int, int]?,
//    "focus_guides": [[0|1, ...], ...]?}
// Malformed JSON throws ParseError and invalid records throw InputError; both
// messages start with "<path>:<line>:".
std::vector<Record> read_jsonl(const std::filesystem::path& path);
// Atomic (temp file + rename). FileError on I/O failure.
void write_jsonl(const std::vector<Record>& records, const std::filesystem::path& path);

Record record_from_json_line(const std::string& line);
std::string record_to_json_line(const Record& record);

}  // namespace focusmix::corpus
