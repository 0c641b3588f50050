#include "hutk/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "hutk/common.hpp"

namespace hutk {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(start));
            return cols;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

}  // namespace

Manifest parse_manifest(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open manifest " + path);
    Manifest manifest;
    manifest.dir = std::filesystem::path(path).parent_path().string();
    std::set<std::string> seen;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto at = [&](const std::string& what) {
            return path + " line " + std::to_string(line_no) + ": " + what;
        };
        const auto cols = split_tabs(line);
        require(cols.size() == 2 || cols.size() == 3, ErrorCode::MalformedRow,
                at("expected 2 or 3 tab-separated columns, got " +
                   std::to_string(cols.size())));
        ManifestRecord record;
        record.line = line_no;
        record.id = cols[0];
        record.audio_path = cols[1];
        require(!record.id.empty(), ErrorCode::MalformedRow, at("empty id"));
        require(!record.audio_path.empty(), ErrorCode::MalformedRow,
                at("empty audio path"));
        require(seen.insert(record.id).second, ErrorCode::DuplicateId,
                at("duplicate id " + record.id));
        std::filesystem::path audio(record.audio_path);
        if (audio.is_relative() && !manifest.dir.empty()) {
            audio = std::filesystem::path(manifest.dir) / audio;
        }
        record.resolved_path = audio.string();
        require(std::filesystem::exists(audio), ErrorCode::MissingFile,
                at("audio file " + record.resolved_path + " does not exist"));
        if (cols.size() == 3) {
            record.has_transcript = true;
            record.transcript = cols[2];
        }
        manifest.records.push_back(std::move(record));
    }
    return manifest;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::IoError, "cannot write manifest " + path);
    for (const ManifestRecord& record : manifest.records) {
        out << record.id << '\t' << record.audio_path;
        if (record.has_transcript) out << '\t' << record.transcript;
        out << '\n';
    }
    require(out.good(), ErrorCode::IoError, "write failed for " + path);
}

void require_transcripts(const Manifest& manifest) {
    for (const ManifestRecord& record : manifest.records) {
        require(record.has_transcript, ErrorCode::MissingTranscript,
                "id " + record.id + " (manifest line " +
                    std::to_string(record.line) + ") has no transcript");
    }
}

}  // namespace hutk
