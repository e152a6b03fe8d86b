#include "stepcount/dataset.h"

#include <fstream>
#include <set>
#include <sstream>

#include "stepcount/errors.h"
#include "stepcount/util.h"

namespace stepcount {

namespace fs = std::filesystem;
using nlohmann::json;

json annotation_to_json(const AnnotationRecord& rec) {
  const auto& a = rec.annotations;
  return json{{"recording_id", a.recording_id},
              {"runner_id", a.runner_id},
              {"audio_path", rec.audio_path},
              {"duration_s", a.recording_duration_s},
              {"step_times_s", a.step_times_s}};
}

AnnotationRecord annotation_from_json(const json& j) {
  AnnotationRecord rec;
  try {
    rec.annotations.recording_id = j.at("recording_id").get<std::string>();
    rec.annotations.runner_id = j.at("runner_id").get<std::string>();
    rec.audio_path = j.at("audio_path").get<std::string>();
    rec.annotations.recording_duration_s = j.at("duration_s").get<double>();
    rec.annotations.step_times_s = j.at("step_times_s").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("annotation record: ") + e.what());
  }
  rec.annotations.validate();
  return rec;
}

std::vector<AnnotationRecord> read_annotations_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file '" + path.string() + "'");
  std::vector<AnnotationRecord> out;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(annotation_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_annotations_jsonl(const std::vector<AnnotationRecord>& recs, const fs::path& path) {
  std::ostringstream ss;
  for (const auto& r : recs) ss << annotation_to_json(r).dump() << '\n';
  write_file(path, ss.str());
}

DatasetManifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  DatasetManifest m;
  try {
    for (const auto& f : j.at("annotation_files")) m.annotation_files.push_back(base / f.get<std::string>());
    if (j.contains("split_file") && !j["split_file"].is_null()) {
      m.split_file = base / j["split_file"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["annotation_files"] = json::array();
  for (const auto& f : m.annotation_files) j["annotation_files"].push_back(f.generic_string());
  if (m.split_file) j["split_file"] = m.split_file->generic_string();
  write_file(path, j.dump(2) + "\n");
}

json splits_to_json(const std::vector<FoldSplit>& splits) {
  json j = json::object();
  for (const auto& f : splits) {
    j[f.fold_id] = {{"train", f.train}, {"val", f.validation}, {"test", f.test}};
  }
  return j;
}

std::vector<FoldSplit> splits_from_json(const json& j) {
  std::vector<FoldSplit> out;
  try {
    for (const auto& [id, body] : j.items()) {
      FoldSplit f;
      f.fold_id = id;
      f.train = body.at("train").get<std::vector<std::string>>();
      f.validation = body.at("val").get<std::vector<std::string>>();
      f.test = body.at("test").get<std::vector<std::string>>();
      out.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("split file: ") + e.what());
  }
  return out;
}

std::vector<StepAnnotations> Dataset::annotations() const {
  std::vector<StepAnnotations> out;
  out.reserve(recordings.size());
  for (const auto& r : recordings) out.push_back(r.annotations);
  return out;
}

Dataset load_dataset(const fs::path& manifest_path, int target_rate_hz) {
  const DatasetManifest m = read_manifest(manifest_path);
  Dataset ds;
  std::set<std::string> seen;
  for (const auto& file : m.annotation_files) {
    for (auto& rec : read_annotations_jsonl(file)) {
      if (!seen.insert(rec.annotations.recording_id).second) {
        throw FormatError("duplicate recording id '" + rec.annotations.recording_id + "'");
      }
      fs::path audio = rec.audio_path;
      if (audio.is_relative()) audio = file.parent_path() / audio;
      Waveform w = read_wav(audio);
      if (w.sample_rate_hz() != target_rate_hz) w = resample(w, target_rate_hz);
      ds.recordings.push_back({std::move(rec.annotations), std::move(w)});
    }
  }
  if (m.split_file) {
    try {
      ds.splits = splits_from_json(json::parse(read_file(*m.split_file)));
    } catch (const json::parse_error& e) {
      throw FormatError(m.split_file->string() + ": " + e.what());
    }
  }
  return ds;
}

void write_corpus(const std::vector<SynthRecording>& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "audio", ec);
  if (ec) throw IoError("cannot create '" + (dir / "audio").string() + "': " + ec.message());
  std::vector<AnnotationRecord> recs;
  for (const auto& r : corpus) {
    const std::string rel = "audio/" + r.annotations.recording_id + ".wav";
    write_wav(r.waveform, dir / rel);
    recs.push_back({r.annotations, rel});
  }
  write_annotations_jsonl(recs, dir / "annotations.jsonl");
  DatasetManifest m;
  m.annotation_files.push_back("annotations.jsonl");
  write_manifest(m, dir / "manifest.json");
}

}  // namespace stepcount
