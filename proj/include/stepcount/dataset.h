#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepcount/audio_io.h"
#include "stepcount/synth_corpus.h"
#include "stepcount/windowing.h"

namespace stepcount {

// One JSON-lines record:
// {"recording_id", "runner_id", "audio_path", "duration_s", "step_times_s": [...]}
struct AnnotationRecord {
  StepAnnotations annotations;
  std::string audio_path;  // relative paths resolve against the annotation file
};

nlohmann::json annotation_to_json(const AnnotationRecord& rec);
AnnotationRecord annotation_from_json(const nlohmann::json& j);

std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path);
void write_annotations_jsonl(const std::vector<AnnotationRecord>& recs, const std::filesystem::path& path);

// {"annotation_files": [...], "split_file": "..."} (split_file optional)
struct DatasetManifest {
  std::vector<std::filesystem::path> annotation_files;
  std::optional<std::filesystem::path> split_file;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

// {fold_id: {"train": [ids], "val": [ids], "test": [ids]}}
nlohmann::json splits_to_json(const std::vector<FoldSplit>& splits);
std::vector<FoldSplit> splits_from_json(const nlohmann::json& j);

struct Recording {
  StepAnnotations annotations;
  Waveform waveform;  // canonical rate
};

struct Dataset {
  std::vector<Recording> recordings;
  std::optional<std::vector<FoldSplit>> splits;

  std::vector<StepAnnotations> annotations() const;
};

// Loads every annotated recording, resampling audio to target_rate_hz.
Dataset load_dataset(const std::filesystem::path& manifest_path, int target_rate_hz = kCanonicalSampleRate);

// Writes <dir>/audio/<recording_id>.wav, <dir>/annotations.jsonl and
// <dir>/manifest.json.
void write_corpus(const std::vector<SynthRecording>& corpus, const std::filesystem::path& dir);

}  // namespace stepcount
