#include "softvla/dataset.hpp"

#include "softvla/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace softvla {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

StateVector encode_state(const Pose& pose, bool gripper_closed) {
    return {pose.position.x(), pose.position.y(), pose.position.z(), pose.roll, pose.pitch, pose.yaw, 0.0,
            gripper_closed ? 1.0 : 0.0};
}

Pose state_pose(const StateVector& s) {
    Pose p;
    p.position = Vec3(s[0], s[1], s[2]);
    p.roll = s[3];
    p.pitch = s[4];
    p.yaw = s[5];
    return p;
}

ActionVector encode_action(const StateVector& prev, const StateVector& cur) {
    return {cur[0] - prev[0],
            cur[1] - prev[1],
            cur[2] - prev[2],
            wrap_angle(cur[3] - prev[3]),
            wrap_angle(cur[4] - prev[4]),
            wrap_angle(cur[5] - prev[5]),
            cur[7]};
}

ActionVector zero_action(double g) { return {0, 0, 0, 0, 0, 0, g}; }

StateVector apply_action(const StateVector& s, const ActionVector& a) {
    return {s[0] + a[0],
            s[1] + a[1],
            s[2] + a[2],
            wrap_angle(s[3] + a[3]),
            wrap_angle(s[4] + a[4]),
            wrap_angle(s[5] + a[5]),
            0.0,
            a[6]};
}

void reencode_actions(Demonstration& demo) {
    for (std::size_t i = 0; i < demo.frames.size(); ++i) {
        demo.frames[i].action = i == 0 ? zero_action(demo.frames[0].state[7])
                                       : encode_action(demo.frames[i - 1].state, demo.frames[i].state);
    }
}

Demonstration filter_noop_frames(const Demonstration& demo, double tol_pos, double tol_rot) {
    Demonstration out = demo;
    out.frames.clear();
    for (std::size_t i = 0; i < demo.frames.size(); ++i) {
        const Frame& f = demo.frames[i];
        if (!out.frames.empty()) {
            // Motion is judged against the last retained frame, which makes
            // the filter idempotent and catches slow drifts.
            const StateVector& prev = out.frames.back().state;
            const ActionVector a = encode_action(prev, f.state);
            const double dp = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
            const double dr = std::max({std::abs(a[3]), std::abs(a[4]), std::abs(a[5])});
            if (dp < tol_pos && dr < tol_rot && f.state[7] == prev[7]) {
                continue;
            }
        }
        out.frames.push_back(f);
    }
    reencode_actions(out);
    return out;
}

std::vector<std::string> demonstration_warnings(const Demonstration& demo) {
    std::vector<std::string> w;
    const auto n = demo.frames.size();
    if (n < 50 || n > 200) {
        w.push_back(demo.demo_id + ": " + std::to_string(n) + " frames, outside the recommended 50-200");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (demo.frames[i].timestamp_s < demo.frames[i - 1].timestamp_s) {
            w.push_back(demo.demo_id + ": timestamps decrease at frame " + std::to_string(i));
            break;
        }
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (demo.frames[i].instruction != demo.frames[0].instruction) {
            w.push_back(demo.demo_id + ": more than one instruction");
            break;
        }
    }
    return w;
}

std::string to_string(DatasetFormat f) { return f == DatasetFormat::episodic ? "A" : "B"; }

DatasetFormat dataset_format_from_string(const std::string& s) {
    if (s == "A" || s == "a" || s == "episodic") {
        return DatasetFormat::episodic;
    }
    if (s == "B" || s == "b" || s == "frame_table") {
        return DatasetFormat::frame_table;
    }
    throw FormatError("unknown dataset format '" + s + "'");
}

namespace {

constexpr int kFormatVersion = 1;

std::string demo_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "demo_%06zu", index);
    return buf;
}

std::string frame_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.png", index);
    return buf;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IntegrityError("missing image " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
}

void check_image(const Image& img, const std::string& what) {
    if (img.width != kProcessedSize || img.height != kProcessedSize ||
        img.pixels.size() != static_cast<std::size_t>(kProcessedSize) * kProcessedSize * 3) {
        throw DomainError(what + ": images must be 256x256 RGB");
    }
}

Image load_frame_image(const fs::path& path, const std::string& what) {
    const auto bytes = read_bytes(path);
    try {
        return decode_png(bytes);
    } catch (const IntegrityError& e) {
        throw IntegrityError(what + ": " + e.what());
    }
}

template <std::size_t N>
std::array<double, N> array_from(const ojson& j, const char* field) {
    const auto& v = j.at(field);
    if (!v.is_array() || v.size() != N) {
        throw FormatError(std::string("field '") + field + "' must have " + std::to_string(N) + " entries");
    }
    std::array<double, N> a{};
    for (std::size_t i = 0; i < N; ++i) {
        a[i] = v[i].get<double>();
    }
    return a;
}

ojson read_metadata(const fs::path& root) {
    const fs::path path = root / "metadata.json";
    std::ifstream in(path);
    if (!in) {
        throw FormatError("missing metadata file " + path.string());
    }
    ojson meta;
    try {
        meta = ojson::parse(in);
    } catch (const ojson::exception& e) {
        throw FormatError("corrupt metadata file " + path.string() + ": " + e.what());
    }
    if (!meta.is_object() || !meta.contains("format_version") || meta["format_version"] != kFormatVersion ||
        !meta.contains("format")) {
        throw FormatError("metadata " + path.string() + " lacks a supported format_version/format");
    }
    return meta;
}

struct DemoRecord {
    std::string demo_id;
    int task_id = 1;
    double capture_hz = 5.0;
    std::size_t num_frames = 0;
};

}  // namespace

// --- writer ----------------------------------------------------------------

struct DatasetWriter::Impl {
    fs::path root;
    DatasetFormat format;
    std::string name;
    std::vector<DemoRecord> demos;
    std::vector<std::pair<std::string, int>> tasks;  // instruction, task id
    std::ofstream frames;                             // frame table only
    std::size_t frame_count = 0;
    std::size_t files = 0;
    bool finished = false;

    std::size_t task_index(const std::string& instruction, int task_id) {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (tasks[i].first == instruction) {
                return i;
            }
        }
        tasks.emplace_back(instruction, task_id);
        return tasks.size() - 1;
    }
};

DatasetWriter::DatasetWriter(const fs::path& root, DatasetFormat format, std::string name)
    : impl_(std::make_unique<Impl>()) {
    impl_->root = root;
    impl_->format = format;
    impl_->name = std::move(name);
    // Stale files from an earlier export would mix into the new dataset.
    if (fs::exists(root) && !fs::is_empty(root)) {
        throw DomainError("output directory is not empty: " + root.string());
    }
    fs::create_directories(root);
    if (format == DatasetFormat::frame_table) {
        impl_->frames.open(root / "frames.jsonl", std::ios::binary | std::ios::trunc);
        if (!impl_->frames) {
            throw Error("cannot write " + (root / "frames.jsonl").string());
        }
    }
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::write(const Demonstration& demo) {
    Impl& s = *impl_;
    if (s.finished) {
        throw Error("dataset writer already finished");
    }
    if (demo.frames.empty()) {
        throw DomainError(demo.demo_id + ": demonstration has no frames");
    }
    const std::size_t index = s.demos.size();
    const fs::path dir = s.root / demo_dir_name(index);
    fs::create_directories(dir / "third");
    fs::create_directories(dir / "wrist");

    std::ostringstream steps;
    for (std::size_t i = 0; i < demo.frames.size(); ++i) {
        const Frame& f = demo.frames[i];
        check_image(f.third_image, demo.demo_id);
        check_image(f.wrist_image, demo.demo_id);
        write_bytes(dir / "third" / frame_file_name(i), encode_png(f.third_image));
        write_bytes(dir / "wrist" / frame_file_name(i), encode_png(f.wrist_image));
        s.files += 2;
        const std::size_t task_index = s.task_index(f.instruction, demo.task_id);
        ojson rec;
        if (s.format == DatasetFormat::episodic) {
            rec["step_index"] = f.step_index;
            rec["timestamp"] = f.timestamp_s;
            rec["state"] = f.state;
            rec["action"] = f.action;
            rec["instruction"] = f.instruction;
            rec["is_first"] = i == 0;
            rec["is_last"] = i + 1 == demo.frames.size();
            steps << rec.dump() << '\n';
        } else {
            rec["episode_index"] = index;
            rec["frame_index"] = i;
            rec["step_index"] = f.step_index;
            rec["timestamp"] = f.timestamp_s;
            rec["state"] = f.state;
            rec["action"] = f.action;
            rec["task_index"] = task_index;
            s.frames << rec.dump() << '\n';
        }
    }
    if (s.format == DatasetFormat::episodic) {
        write_text(dir / "steps.jsonl", steps.str());
        ++s.files;
    }
    s.frame_count += demo.frames.size();
    s.demos.push_back({demo.demo_id, demo.task_id, demo.capture_hz, demo.frames.size()});
}

ExportSummary DatasetWriter::finish() {
    Impl& s = *impl_;
    if (s.finished) {
        throw Error("dataset writer already finished");
    }
    s.finished = true;
    ojson meta;
    meta["format_version"] = kFormatVersion;
    meta["format"] = to_string(s.format);
    meta["name"] = s.name;
    meta["state_dim"] = 8;
    meta["action_dim"] = 7;
    meta["image_size"] = {kProcessedSize, kProcessedSize};
    meta["frame_count"] = s.frame_count;
    meta["tasks"] = ojson::array();
    for (std::size_t i = 0; i < s.tasks.size(); ++i) {
        meta["tasks"].push_back({{"task_index", i}, {"task_id", s.tasks[i].second}, {"instruction", s.tasks[i].first}});
    }
    const char* list_key = s.format == DatasetFormat::episodic ? "demos" : "episodes";
    meta[list_key] = ojson::array();
    for (std::size_t i = 0; i < s.demos.size(); ++i) {
        const auto& d = s.demos[i];
        meta[list_key].push_back({{"index", i},
                                  {"demo_id", d.demo_id},
                                  {"task_id", d.task_id},
                                  {"capture_hz", d.capture_hz},
                                  {"num_frames", d.num_frames},
                                  {"dir", demo_dir_name(i)}});
    }
    if (s.format == DatasetFormat::frame_table) {
        s.frames.close();
        ++s.files;
        std::ostringstream tasks;
        for (std::size_t i = 0; i < s.tasks.size(); ++i) {
            ojson t;
            t["task_index"] = i;
            t["task"] = s.tasks[i].first;
            t["task_id"] = s.tasks[i].second;
            tasks << t.dump() << '\n';
        }
        write_text(s.root / "tasks.jsonl", tasks.str());
        ++s.files;
    }
    write_text(s.root / "metadata.json", meta.dump(2) + "\n");
    ++s.files;
    return {s.format, s.demos.size(), s.frame_count, s.files};
}

// --- reader ----------------------------------------------------------------

struct DatasetReader::Impl {
    fs::path root;
    DatasetFormat format = DatasetFormat::episodic;
    std::string name;
    std::vector<DemoRecord> demos;
    std::vector<std::string> task_text;
    std::vector<std::streamoff> offsets;  // frame table: first line of each episode
};

DatasetReader::DatasetReader(const fs::path& root) : impl_(std::make_unique<Impl>()) {
    Impl& s = *impl_;
    s.root = root;
    const ojson meta = read_metadata(root);
    try {
        s.format = dataset_format_from_string(meta.at("format").get<std::string>());
        s.name = meta.value("name", "");
        const char* list_key = s.format == DatasetFormat::episodic ? "demos" : "episodes";
        for (const auto& d : meta.at(list_key)) {
            s.demos.push_back({d.at("demo_id").get<std::string>(), d.at("task_id").get<int>(),
                               d.at("capture_hz").get<double>(), d.at("num_frames").get<std::size_t>()});
        }
        if (s.format == DatasetFormat::frame_table) {
            std::ifstream tasks(root / "tasks.jsonl");
            if (!tasks) {
                throw FormatError("missing task table " + (root / "tasks.jsonl").string());
            }
            std::string line;
            while (std::getline(tasks, line)) {
                if (line.empty()) continue;
                const ojson t = ojson::parse(line);
                const auto idx = t.at("task_index").get<std::size_t>();
                if (idx != s.task_text.size()) {
                    throw FormatError("task table out of order");
                }
                s.task_text.push_back(t.at("task").get<std::string>());
            }
            std::ifstream frames(root / "frames.jsonl", std::ios::binary);
            if (!frames) {
                throw FormatError("missing frame table " + (root / "frames.jsonl").string());
            }
            std::int64_t last_episode = -1;
            std::streamoff pos = 0;
            while (std::getline(frames, line)) {
                const std::streamoff here = pos;
                pos += static_cast<std::streamoff>(line.size()) + 1;
                if (line.empty()) continue;
                // Only the episode index is needed for the offset table.
                const auto key = line.find("\"episode_index\":");
                if (key == std::string::npos) {
                    throw FormatError("frame record without episode_index");
                }
                const std::int64_t ep = std::stoll(line.substr(key + 16));
                if (ep < last_episode) {
                    throw FormatError("frame table episode_index decreases");
                }
                if (ep != last_episode) {
                    if (ep != static_cast<std::int64_t>(s.offsets.size())) {
                        throw FormatError("frame table skips an episode");
                    }
                    s.offsets.push_back(here);
                    last_episode = ep;
                }
            }
            if (s.offsets.size() != s.demos.size()) {
                throw FormatError("frame table and metadata disagree on the episode count");
            }
        }
    } catch (const ojson::exception& e) {
        throw FormatError(std::string("malformed dataset metadata: ") + e.what());
    }
}

DatasetReader::~DatasetReader() = default;

DatasetFormat DatasetReader::format() const { return impl_->format; }
std::string DatasetReader::name() const { return impl_->name; }
std::size_t DatasetReader::size() const { return impl_->demos.size(); }

Demonstration DatasetReader::read(std::size_t index) const {
    const Impl& s = *impl_;
    if (index >= s.demos.size()) {
        throw DomainError("demonstration index out of range");
    }
    const DemoRecord& rec = s.demos[index];
    const fs::path dir = s.root / demo_dir_name(index);
    Demonstration demo;
    demo.demo_id = rec.demo_id;
    demo.task_id = rec.task_id;
    demo.capture_hz = rec.capture_hz;

    std::vector<ojson> records;
    try {
        if (s.format == DatasetFormat::episodic) {
            std::ifstream in(dir / "steps.jsonl");
            if (!in) {
                throw FormatError("missing step stream " + (dir / "steps.jsonl").string());
            }
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty()) records.push_back(ojson::parse(line));
            }
        } else {
            std::ifstream in(s.root / "frames.jsonl", std::ios::binary);
            in.seekg(s.offsets[index]);
            std::string line;
            while (records.size() < rec.num_frames && std::getline(in, line)) {
                if (line.empty()) continue;
                ojson r = ojson::parse(line);
                if (r.at("episode_index").get<std::size_t>() != index) {
                    break;
                }
                records.push_back(std::move(r));
            }
        }
        if (records.size() != rec.num_frames) {
            throw FormatError(rec.demo_id + ": expected " + std::to_string(rec.num_frames) + " frames, found " +
                              std::to_string(records.size()));
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            const ojson& r = records[i];
            Frame f;
            f.step_index = r.at("step_index").get<int>();
            f.timestamp_s = r.at("timestamp").get<double>();
            f.state = array_from<8>(r, "state");
            f.action = array_from<7>(r, "action");
            if (s.format == DatasetFormat::episodic) {
                f.instruction = r.at("instruction").get<std::string>();
            } else {
                const auto t = r.at("task_index").get<std::size_t>();
                if (t >= s.task_text.size()) {
                    throw FormatError("task_index out of range");
                }
                f.instruction = s.task_text[t];
            }
            const std::string what = rec.demo_id + " frame " + std::to_string(i);
            f.third_image = load_frame_image(dir / "third" / frame_file_name(i), what + " third image");
            f.wrist_image = load_frame_image(dir / "wrist" / frame_file_name(i), what + " wrist image");
            demo.frames.push_back(std::move(f));
        }
    } catch (const ojson::exception& e) {
        throw FormatError(rec.demo_id + ": malformed frame record: " + e.what());
    }
    return demo;
}

ExportSummary export_demos(const std::vector<Demonstration>& demos, DatasetFormat format, const fs::path& root,
                           const std::string& name) {
    if (demos.empty()) {
        throw DomainError("export_demos: no demonstrations");
    }
    DatasetWriter writer(root, format, name);
    for (const auto& d : demos) {
        writer.write(d);
    }
    return writer.finish();
}

std::vector<Demonstration> import_demos(const fs::path& root) {
    DatasetReader reader(root);
    std::vector<Demonstration> out;
    out.reserve(reader.size());
    for (std::size_t i = 0; i < reader.size(); ++i) {
        out.push_back(reader.read(i));
    }
    return out;
}

ExportSummary convert_dataset(const fs::path& src, const fs::path& dst, DatasetFormat format) {
    DatasetReader reader(src);
    if (reader.size() == 0) {
        throw DomainError("convert_dataset: source has no demonstrations");
    }
    DatasetWriter writer(dst, format, reader.name());
    for (std::size_t i = 0; i < reader.size(); ++i) {
        writer.write(reader.read(i));
    }
    return writer.finish();
}

}  // namespace softvla
