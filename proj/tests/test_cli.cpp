//
//  test_cli.cpp
//  bicilab tests
//
//  Drives the bicilab executable end to end and checks exit codes and files.
//
//  Distributed under the Apache License, Version 2.0.
//  http://www.apache.org/licenses/LICENSE-2.0.html
//

#include "bicilab/ace.hpp"
#include "bicilab/report.hpp"
#include "bicilab/signals.hpp"
#include "bicilab/wav.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#ifndef BICILAB_BIN
#error "BICILAB_BIN must name the bicilab executable"
#endif

using namespace bicilab;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

std::string slurp(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Run run(const std::string& args, const fs::path& dir)
{
    const fs::path out = dir / "stdout.txt";
    const std::string cmd = std::string("BICILAB_LOG=error '") + BICILAB_BIN + "' " + args + " > '" + out.string() +
                            "' 2> '" + (dir / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    return r;
}

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("bicilab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream os(path);
    os << text;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Desk-scale experiment: 4 electrodes at 4000 frames/s to match the reduced model.
std::string toy_config(const std::string& extra)
{
    return "seed = 7\n"
           "[corpus]\ntargets = speech:1, speech:2\nnoises = noise:1, noise:2\nseconds = 0.25\n"
           "[patient]\nn = 2\nm = 4\ncsr = 4000\n"
           "[model]\npreset = reduced\n"
           "[synth]\ncount = 6\n" +
           extra;
}

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("usage errors exit with 1")
    {
        const fs::path dir = scratch("usage");
        CHECK(run("", dir).code == 1);
        CHECK(run("frobnicate", dir).code == 1);
        CHECK(run("--help", dir).code == 0);
        CHECK(run("encode", dir).code == 1);
        CHECK(run("train", dir).code == 1);
        CHECK(run("eval --config " + q(dir / "absent.cfg"), dir).code == 1);
        CHECK(run("encode x.wav --jobs 0", dir).code == 1);
        fs::remove_all(dir);
    }

    TEST_CASE("data errors exit with 2")
    {
        const fs::path dir = scratch("data");
        CHECK(run("encode " + q(dir / "missing.wav"), dir).code == 2);
        write_text(dir / "garbage.wav", "RIFF nonsense");
        CHECK(run("encode " + q(dir / "garbage.wav"), dir).code == 2);
        write_wav(dir / "stereo.wav", SampleBuffer::stereo(Eigen::VectorXd::Zero(100), Eigen::VectorXd::Zero(100), 16000.0));
        CHECK(run("encode " + q(dir / "stereo.wav"), dir).code == 2);
        fs::remove_all(dir);
    }

    TEST_CASE("encode silence")
    {
        const fs::path dir = scratch("silence");
        write_wav(dir / "s.wav", SampleBuffer::mono(Eigen::VectorXd::Zero(16000), 16000.0));
        const Run r = run("encode " + q(dir / "s.wav") + " --out " + q(dir / "s.egf"), dir);
        REQUIRE(r.code == 0);
        CHECK(r.out.find("frames 1000") != std::string::npos);
        const Electrodogram e = read_egf(dir / "s.egf");
        CHECK(e.frames() == 1000);
        CHECK(e.amplitudes.isZero(0.0));
        fs::remove_all(dir);
    }

    TEST_CASE("encode is deterministic and round-trips")
    {
        const fs::path dir = scratch("encode");
        write_wav(dir / "a.wav", synthetic_speech(3, 4.0), WavFormat::float32);
        REQUIRE(run("encode " + q(dir / "a.wav") + " --side l", dir).code == 0);
        const std::string first = slurp(dir / "a.egf");
        CHECK(first.rfind("EGF1 m=22 csr=1000 side=l frames=4000\n", 0) == 0);
        REQUIRE(run("encode " + q(dir / "a.wav") + " --side l", dir).code == 0);
        CHECK(slurp(dir / "a.egf") == first);

        write_egf(dir / "b.egf", read_egf(dir / "a.egf"));
        CHECK(slurp(dir / "b.egf") == first);

        // Resampled input encodes at the same frame count.
        write_wav(dir / "c.wav", resample(synthetic_speech(3, 4.0), 44100.0), WavFormat::float32);
        REQUIRE(run("encode " + q(dir / "c.wav"), dir).code == 0);
        const auto frames = read_egf(dir / "c.egf").frames();
        CHECK(frames >= 3999);
        CHECK(frames <= 4001);
        CHECK(run("encode " + q(dir / "a.wav") + " --side x", dir).code == 1);
        fs::remove_all(dir);
    }

    TEST_CASE("synth skips bad lines and fails when nothing is built")
    {
        const fs::path dir = scratch("synth");
        write_text(dir / "m.txt", "scene speech:1 noise:1 az_t=0 az_n=30 snr=0\n"
                                  "scene missing.wav noise:1 az_t=0 az_n=30 snr=0\n");
        const Run r = run("synth " + q(dir / "m.txt") + " --out " + q(dir / "out"), dir);
        CHECK(r.code == 0);
        CHECK(r.out.find("wrote 1 of 2") != std::string::npos);
        CHECK(fs::exists(dir / "out" / "scene_0000.mix.wav"));
        CHECK(fs::exists(dir / "out" / "scene_0000.l.egf"));

        write_text(dir / "bad.txt", "scene missing.wav noise:1 az_t=0 az_n=30 snr=0\n");
        CHECK(run("synth " + q(dir / "bad.txt") + " --out " + q(dir / "out2"), dir).code == 2);
        write_text(dir / "syntax.txt", "scene speech:1 noise:1 az_n=30\n");
        CHECK(run("synth " + q(dir / "syntax.txt"), dir).code == 1);
        fs::remove_all(dir);
    }

    TEST_CASE("train rejects an empty scene directory")
    {
        const fs::path dir = scratch("empty");
        fs::create_directories(dir / "scenes");
        write_text(dir / "exp.cfg", toy_config("[train]\nscenes = scenes\n"));
        CHECK(run("train --config " + q(dir / "exp.cfg"), dir).code == 1);
        write_text(dir / "exp2.cfg", toy_config("[train]\nscenes = nowhere\n"));
        CHECK(run("train --config " + q(dir / "exp2.cfg"), dir).code == 1);
        fs::remove_all(dir);
    }

    TEST_CASE("train is deterministic, resumable and reports divergence")
    {
        const fs::path dir = scratch("train");
        write_text(dir / "exp.cfg", toy_config(""));
        REQUIRE(run("synth --config " + q(dir / "exp.cfg") + " --out " + q(dir / "scenes"), dir).code == 0);
        CHECK(std::distance(fs::directory_iterator(dir / "scenes"), fs::directory_iterator{}) == 6 * 6);

        write_text(dir / "long.cfg", toy_config("[train]\nscenes = scenes\nlr = 0.01\nbatch_size = 2\nmax_epochs = 4\n"));
        write_text(dir / "short.cfg", toy_config("[train]\nscenes = scenes\nlr = 0.01\nbatch_size = 2\nmax_epochs = 2\n"));
        for (const char* name : {"a", "b"})
            REQUIRE(run("train --config " + q(dir / "long.cfg") + " --out " + q(dir / name) + " --seed 9", dir).code ==
                    0);
        REQUIRE(run("train --config " + q(dir / "long.cfg") + " --out " + q(dir / "full"), dir).code == 0);
        REQUIRE(run("train --config " + q(dir / "short.cfg") + " --out " + q(dir / "resumed"), dir).code == 0);
        const Run resumed = run("train --config " + q(dir / "long.cfg") + " --out " + q(dir / "resumed"), dir);
        REQUIRE(resumed.code == 0);
        CHECK(resumed.out.find("resuming from epoch 2") != std::string::npos);

        const std::string history = slurp(dir / "full" / "history.csv");
        CHECK(history.rfind("epoch,train_loss,val_loss,lr", 0) == 0);
        CHECK(std::count(history.begin(), history.end(), '\n') == 5);
        CHECK(slurp(dir / "resumed" / "history.csv") == history);
        CHECK(slurp(dir / "resumed" / "model.dwt") == slurp(dir / "full" / "model.dwt"));
        CHECK(slurp(dir / "a" / "history.csv") == slurp(dir / "b" / "history.csv"));
        CHECK(slurp(dir / "a" / "model.dwt") == slurp(dir / "b" / "model.dwt"));
        CHECK(fs::exists(dir / "a" / "model.dwt.model"));

        write_text(dir / "boom.cfg", toy_config("[train]\nscenes = scenes\nlr = 1e300\nmax_epochs = 3\n"));
        const Run boom = run("train --config " + q(dir / "boom.cfg") + " --out " + q(dir / "boom"), dir);
        CHECK(boom.code == 3);
        CHECK(slurp(dir / "stderr.txt").find("non-finite") != std::string::npos);
        CHECK_FALSE(fs::exists(dir / "boom" / "model.dwt"));
        fs::remove_all(dir);
    }

    TEST_CASE("eval sweep over variants")
    {
        const fs::path dir = scratch("eval");
        write_text(dir / "exp.cfg",
                   toy_config("[train]\nscenes = scenes\nmax_steps = 2\n"
                              "[scene]\nsnr = -5, 0, 5, 10\n"
                              "[corpus]\ntargets = speech:11\nnoises = noise:12\n"));
        REQUIRE(run("synth --config " + q(dir / "exp.cfg") + " --out " + q(dir / "scenes"), dir).code == 0);
        for (const char* v : {"fused", "bilateral"}) {
            write_text(dir / (std::string(v) + ".cfg"),
                       toy_config(std::string("[train]\nscenes = scenes\nmax_steps = 2\n[model]\nvariant = ") + v +
                                  "\n"));
            REQUIRE(run("train --config " + q(dir / (std::string(v) + ".cfg")) + " --out " + q(dir / v), dir).code ==
                    0);
        }
        CHECK(run("eval --config " + q(dir / "exp.cfg") + " --weights fused:" + q(dir / "bilateral" / "model.dwt"),
                  dir)
                  .code == 1);

        const Run r = run("eval --jobs 2 --config " + q(dir / "exp.cfg") + " --out " + q(dir / "sweep") +
                              " --weights fused:" + q(dir / "fused" / "model.dwt") + " --weights bilateral:" +
                              q(dir / "bilateral" / "model.dwt"),
                          dir);
        REQUIRE(r.code == 0);
        const auto rows = read_metrics_csv(dir / "sweep" / "metrics.csv");
        CHECK(rows.size() == 37 * 4 * 3 * 2);
        std::set<std::string> variants;
        for (const auto& row : rows) {
            variants.insert(row.variant);
            if (row.variant == "unprocessed") {
                CHECK(row.snri_db == 0.0);
                if (row.azimuth == 0.0)
                    CHECK(*row.eic == 1.0);
            }
        }
        CHECK(variants == std::set<std::string>{"unprocessed", "fused", "bilateral"});
        CHECK(fs::exists(dir / "sweep" / "eic_vs_azimuth.fused.tsv"));
        CHECK(fs::exists(dir / "sweep" / "lcc_vs_azimuth.bilateral.right.tsv"));

        // Same sweep on one worker is byte-identical.
        REQUIRE(run("eval --jobs 1 --config " + q(dir / "exp.cfg") + " --out " + q(dir / "sweep1") +
                        " --weights fused:" + q(dir / "fused" / "model.dwt") + " --weights bilateral:" +
                        q(dir / "bilateral" / "model.dwt"),
                    dir)
                    .code == 0);
        CHECK(slurp(dir / "sweep1" / "metrics.csv") == slurp(dir / "sweep" / "metrics.csv"));

        const Run rep = run("report --out " + q(dir / "rep") + " --in " + q(dir / "sweep" / "metrics.csv"), dir);
        CHECK(rep.code == 0);
        write_report(dir / "direct", read_metrics_csv(dir / "sweep" / "metrics.csv"));
        CHECK(slurp(dir / "rep" / "summary.csv") == slurp(dir / "direct" / "summary.csv"));
        CHECK(run("report --out " + q(dir / "nothing"), dir).code == 2);
        fs::remove_all(dir);
    }
}
