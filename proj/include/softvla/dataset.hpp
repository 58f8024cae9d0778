#pragma once

#include "softvla/geometry.hpp"
#include "softvla/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace softvla {

// [x, y, z, roll, pitch, yaw, pad, g]; g = 1 means closed.
using StateVector = std::array<double, 8>;
// [dx, dy, dz, droll, dpitch, dyaw, g]
using ActionVector = std::array<double, 7>;

StateVector encode_state(const Pose& pose, bool gripper_closed);
Pose state_pose(const StateVector& s);

// Positions subtract, angles wrap; g = cur.g.
ActionVector encode_action(const StateVector& prev, const StateVector& cur);
ActionVector zero_action(double g);
StateVector apply_action(const StateVector& s, const ActionVector& a);

// Frame t carries the action that led from frame t-1 to frame t; frame 0
// carries a zero motion with its own g.
struct Frame {
    int step_index = 0;
    double timestamp_s = 0.0;
    Image third_image;  // 256 x 256
    Image wrist_image;  // 256 x 256, mirrored
    StateVector state{};
    ActionVector action{};
    std::string instruction;

    bool operator==(const Frame&) const = default;
};

struct Demonstration {
    std::string demo_id;
    int task_id = 1;
    std::vector<Frame> frames;
    double capture_hz = 5.0;

    bool operator==(const Demonstration&) const = default;
};

// Recomputes every action from consecutive states (frame 0 gets zero motion).
void reencode_actions(Demonstration& demo);

// Drops frames with near-zero motion and an unchanged gripper. The first
// frame and gripper-transition frames are kept; step indices are preserved.
Demonstration filter_noop_frames(const Demonstration& demo, double tol_pos = 1e-4, double tol_rot = 1e-3);

// Non-fatal remarks about a demonstration (frame count outside 50-200,
// decreasing timestamps, mixed instructions).
std::vector<std::string> demonstration_warnings(const Demonstration& demo);

enum class DatasetFormat { episodic, frame_table };  // "A" and "B"

std::string to_string(DatasetFormat f);
DatasetFormat dataset_format_from_string(const std::string& s);

struct ExportSummary {
    DatasetFormat format = DatasetFormat::episodic;
    std::size_t demo_count = 0;
    std::size_t frame_count = 0;
    std::size_t files_written = 0;
};

// Writes demonstrations one at a time so large datasets never sit in memory.
// The metadata file is written by finish(). The root must be absent or
// empty (DomainError otherwise).
class DatasetWriter {
public:
    DatasetWriter(const std::filesystem::path& root, DatasetFormat format, std::string name = "softvla");
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    void write(const Demonstration& demo);
    ExportSummary finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Random access to the demonstrations of an exported dataset.
class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& root);
    ~DatasetReader();
    DatasetReader(const DatasetReader&) = delete;
    DatasetReader& operator=(const DatasetReader&) = delete;

    DatasetFormat format() const;
    std::string name() const;
    std::size_t size() const;
    Demonstration read(std::size_t index) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Throws DomainError on an empty list.
ExportSummary export_demos(const std::vector<Demonstration>& demos, DatasetFormat format,
                           const std::filesystem::path& root, const std::string& name = "softvla");
std::vector<Demonstration> import_demos(const std::filesystem::path& root);
ExportSummary convert_dataset(const std::filesystem::path& src, const std::filesystem::path& dst,
                              DatasetFormat format);

}  // namespace softvla
