#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hutk {

struct ManifestRecord {
    std::string id;
    std::string audio_path;     // as written in the manifest file
    std::string resolved_path;  // relative paths resolved against the manifest dir
    bool has_transcript = false;
    std::string transcript;
    int64_t line = 0;
};

struct Manifest {
    std::string dir;
    std::vector<ManifestRecord> records;
};

// TSV rows id<TAB>audio_path[<TAB>transcript]; ids unique, audio files must
// exist at parse time. Missing transcripts are only an error for stages that
// need them (require_transcripts).
Manifest parse_manifest(const std::string& path);

void write_manifest(const Manifest& manifest, const std::string& path);

void require_transcripts(const Manifest& manifest);

}  // namespace hutk
