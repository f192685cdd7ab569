#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "erseg/checkpoint.hpp"
#include "erseg/config.hpp"
#include "erseg/network.hpp"
#include "erseg/rng.hpp"

using namespace erseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("erseg_ckpt_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Checkpoint sample_checkpoint() {
    UNetArch arch;
    arch.levels = 2;
    arch.base_width = 4;
    arch.in_channels = 1;
    arch.k_tot = 3;
    Rng rng(11);
    Checkpoint ck;
    ck.config_text = serialize_config(TrainConfig{});
    ck.iter = 1234;
    ck.best_dice = 87.5;
    Rng batch(5), layout(6);
    batch.next_u64();
    ck.rng_batch = batch.state();
    ck.rng_layout = layout.state();
    const NetworkParams student = build_network(arch, rng);
    NetworkParams teacher = student;
    teacher.tensors[0].t.v[0] += 0.25;
    ck.student = student.tensors;
    ck.teacher = teacher.tensors;
    ck.velocity = SgdState::init(student).velocity;
    return ck;
}

}  // namespace

TEST_CASE("checkpoints round-trip bitwise") {
    TempDir tmp;
    const Checkpoint ck = sample_checkpoint();
    const std::string path = tmp.file("state.bin");
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);
    REQUIRE(back.config_text == ck.config_text);
    REQUIRE(back.iter == ck.iter);
    REQUIRE(back.best_dice == ck.best_dice);
    REQUIRE(back.rng_batch == ck.rng_batch);
    REQUIRE(back.rng_layout == ck.rng_layout);
    REQUIRE(back.student.size() == ck.student.size());
    for (size_t i = 0; i < ck.student.size(); ++i) {
        REQUIRE(back.student[i].name == ck.student[i].name);
        REQUIRE(back.student[i].t.shape == ck.student[i].t.shape);
        REQUIRE(back.student[i].t.v == ck.student[i].t.v);
        REQUIRE(back.teacher[i].t.v == ck.teacher[i].t.v);
        REQUIRE(back.velocity[i].t.v == ck.velocity[i].t.v);
    }
}

TEST_CASE("restored batch stream continues exactly") {
    TempDir tmp;
    Checkpoint ck = sample_checkpoint();
    Rng reference;
    reference.restore(ck.rng_batch);
    const std::string path = tmp.file("state.bin");
    save_checkpoint(ck, path);
    Rng resumed;
    resumed.restore(load_checkpoint(path).rng_batch);
    for (int i = 0; i < 100; ++i) REQUIRE(resumed.next_u64() == reference.next_u64());
}

TEST_CASE("corrupt checkpoints are rejected") {
    TempDir tmp;
    const std::string missing = tmp.file("missing.bin");
    REQUIRE_THROWS_AS(load_checkpoint(missing), CheckpointError);

    const std::string garbage = tmp.file("garbage.bin");
    {
        std::ofstream os(garbage, std::ios::binary);
        os << "not a checkpoint at all";
    }
    REQUIRE_THROWS_AS(load_checkpoint(garbage), CheckpointError);

    const std::string truncated = tmp.file("trunc.bin");
    save_checkpoint(sample_checkpoint(), truncated);
    const auto full_size = fs::file_size(truncated);
    fs::resize_file(truncated, full_size / 2);
    REQUIRE_THROWS_AS(load_checkpoint(truncated), CheckpointError);
}

TEST_CASE("tensor restoration enforces names and shapes") {
    const Checkpoint ck = sample_checkpoint();
    UNetArch arch;
    arch.levels = 2;
    arch.base_width = 4;
    arch.in_channels = 1;
    arch.k_tot = 3;
    Rng rng(99);
    NetworkParams dst = build_network(arch, rng);
    restore_tensors(dst, ck.student, "student");
    for (size_t i = 0; i < dst.tensors.size(); ++i)
        REQUIRE(dst.tensors[i].t.v == ck.student[i].t.v);

    NetworkParams wrong = dst;
    wrong.tensors.pop_back();
    REQUIRE_THROWS_AS(restore_tensors(wrong, ck.student, "student"), CheckpointError);

    NetworkParams renamed = dst;
    renamed.tensors[0].name = "other";
    REQUIRE_THROWS_AS(restore_tensors(renamed, ck.student, "student"), CheckpointError);
}
