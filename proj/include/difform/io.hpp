#pragma once

#include <string>
#include <vector>

#include "difform/analysis.hpp"
#include "difform/core.hpp"
#include "difform/pipeline.hpp"

#include "json.hpp"

namespace difform {

// MetaImage-style two-file volumes: text header (ObjectType, NDims, DimSize,
// ElementSpacing, Offset, ElementType, ElementNumberOfChannels for fields,
// ElementDataFile) plus little-endian raw payload, x-fastest. Images and
// fields are MET_FLOAT, labels MET_SHORT. Parse errors throw
// std::invalid_argument naming the file and byte offset.
void write_image_mhd(const ScalarImage& img, const std::string& path);
ScalarImage read_image_mhd(const std::string& path);
void write_labels_mhd(const LabelImage& labels, const std::string& path);
LabelImage read_labels_mhd(const std::string& path);
void write_field_mhd(const VectorField& f, const std::string& path);
VectorField read_field_mhd(const std::string& path);

// CSV "id,x_mm,y_mm,z_mm" (z written as 0 for 2D sets).
void write_landmarks_csv(const LandmarkSet& pts, const std::string& path);
LandmarkSet read_landmarks_csv(const std::string& path);

// Binary P5 portable graymap, maxval 255, linear min->max value mapping; the
// numeric range goes into a sibling JSON next to the raster.
void write_pgm(const std::vector<double>& values, int64_t width, int64_t height,
               const std::string& path);
void write_pgm_with_range_json(const std::vector<double>& values, int64_t width,
                               int64_t height, const std::string& path);

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, size_t n);

// JSON serialization (all carry schema_version).
nlohmann::json config_to_json(const RegistrationConfig& c, const PyramidSchedule& s);
void config_from_json(const nlohmann::json& j, RegistrationConfig& c, PyramidSchedule& s);
RegistrationConfig load_config(const std::string& path, PyramidSchedule& sched);

nlohmann::json affine_to_json(const AffineTransform& T, const GridMeta& fit_meta);
AffineTransform affine_from_json(const nlohmann::json& j);
void write_affine_json(const AffineTransform& T, const GridMeta& fit_meta,
                       const std::string& path);
AffineTransform read_affine_json(const std::string& path);

nlohmann::json overlap_to_json(const OverlapReport& r);
nlohmann::json landmark_errors_to_json(const LandmarkErrors& e);
nlohmann::json conditioning_to_json(const ConditioningReport& r);

void write_runlog_csv(const RunLog& log, const std::string& path);

// Run manifest written alongside every CLI output: config hash, input
// digests, output digests, tool version, seed, timestamps.
struct ManifestEntry {
    std::string path;
    std::string sha256;
};

struct RunManifest {
    std::string tool_version;
    std::string command;
    uint64_t seed = 0;
    std::string config_hash;
    std::vector<ManifestEntry> inputs;
    std::vector<ManifestEntry> outputs;
    std::string started_utc;
    std::string finished_utc;
};

void write_manifest(const RunManifest& m, const std::string& path);

extern const char* const kToolVersion;

}  // namespace difform
