import math

import numpy as np
import pytest

from hazenet import load_patches, read_gray, read_image, write_gray, write_image
from hazenet.cli import main, read_config_file

from helpers import smooth_depth, textured_image


def write_scene(tmp_path, seed=0, size=40, stem="scene"):
    rng = np.random.default_rng(seed)
    image = textured_image(rng, size)
    depth = smooth_depth(rng, size)
    depth = depth / depth.max()
    image_path = tmp_path / f"{stem}.png"
    depth_path = tmp_path / f"{stem}_depth.png"
    write_image(image, image_path)
    write_gray(depth, depth_path, bits=16)
    return image_path, depth_path


def write_manifest(tmp_path, count=3, size=40):
    lines = []
    for i in range(count):
        write_scene(tmp_path, seed=100 + i, size=size, stem=f"scene{i}")
        lines.append(f"scene{i}.png scene{i}_depth.png")
    manifest = tmp_path / "scenes.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def test_synth_with_zero_beta_reproduces_input(tmp_path, capsys):
    image_path, depth_path = write_scene(tmp_path)
    out = tmp_path / "hazy.png"
    rc = main(
        ["synth", str(image_path), str(depth_path), "-o", str(out), "--beta", "0",
         "--airlight", "0.9,0.9,0.9"]
    )
    assert rc == 0
    assert np.array_equal(read_image(out), read_image(image_path))
    tmap = read_gray(tmp_path / "hazy_tmap.png")
    assert np.array_equal(tmap, np.ones_like(tmap))


def test_synth_of_airlight_colored_scene_is_airlight(tmp_path):
    flat = np.full((24, 24, 3), 0.8)
    image_path = tmp_path / "flat.png"
    write_image(flat, image_path)
    depth_path = tmp_path / "depth.png"
    write_gray(np.random.default_rng(0).random((24, 24)), depth_path, bits=16)
    out = tmp_path / "hazy.png"
    rc = main(
        ["synth", str(image_path), str(depth_path), "-o", str(out), "--beta", "0.7",
         "--airlight", "0.8,0.8,0.8"]
    )
    assert rc == 0
    assert np.array_equal(read_image(out), read_image(image_path))


def test_synth_matches_hand_computed_model(tmp_path):
    clean = np.array(
        [[[10, 20, 30], [40, 50, 60], [70, 80, 90], [100, 110, 120]]] * 4, dtype=np.uint8
    )
    clean_unit = clean.astype(np.float64) / 255.0
    depth_bytes = np.tile(np.array([0, 85, 170, 255], dtype=np.uint8), (4, 1))
    image_path = tmp_path / "clean.png"
    depth_path = tmp_path / "depth.pgm"
    write_image(clean_unit, image_path)
    depth_path.write_bytes(b"P5\n4 4\n255\n" + depth_bytes.tobytes())

    beta, airlight = 0.5, np.array([0.9, 0.8, 0.7])
    out = tmp_path / "hazy.png"
    rc = main(
        ["synth", str(image_path), str(depth_path), "-o", str(out), "--beta", str(beta),
         "--airlight", "0.9,0.8,0.7"]
    )
    assert rc == 0
    depth_unit = depth_bytes.astype(np.float64) / 255.0
    t = np.exp(-beta * depth_unit)
    expected_float = clean_unit * t[..., None] + (1 - t[..., None]) * airlight
    expected_bytes = np.rint(np.clip(expected_float, 0, 1) * 255) / 255.0
    assert np.array_equal(read_image(out), expected_bytes)
    t_back = read_gray(tmp_path / "hazy_tmap.png")
    assert np.abs(t_back - t).max() <= 1 / 131070 + 1e-12


def test_build_dataset_writes_labeled_container(tmp_path):
    manifest = write_manifest(tmp_path, count=2)
    out = tmp_path / "patches.bin"
    rc = main(["build-dataset", str(manifest), "-o", str(out), "--seed", "3"])
    assert rc == 0
    patches = load_patches(out)
    assert len(patches) > 0
    assert patches.labels is not None


def test_train_writes_model_and_loss_log(tmp_path):
    manifest = write_manifest(tmp_path, count=3)
    model = tmp_path / "model.hzn"
    rc = main(
        ["train", "--manifest", str(manifest), "-o", str(model), "--epochs", "5",
         "--batch-size", "128", "--seed", "1"]
    )
    assert rc == 0
    assert model.exists()
    log_lines = (tmp_path / "model.hzn.loss.txt").read_text().strip().splitlines()
    assert len(log_lines) == 5
    losses = []
    for i, line in enumerate(log_lines, start=1):
        epoch, _, loss = line.partition(",")
        assert int(epoch) == i
        losses.append(float(loss))
    assert losses[-1] < losses[0]
    assert sum(b - a for a, b in zip(losses, losses[1:])) < 0


def test_train_zero_epochs_writes_fresh_initialization(tmp_path):
    manifest = write_manifest(tmp_path, count=1)
    first = tmp_path / "a.hzn"
    second = tmp_path / "b.hzn"
    assert main(["train", "--manifest", str(manifest), "-o", str(first), "--epochs", "0", "--seed", "9"]) == 0
    assert main(["train", "--manifest", str(manifest), "-o", str(second), "--epochs", "0", "--seed", "9"]) == 0
    assert first.read_bytes() == second.read_bytes()
    from hazenet.nn import Adadelta, JointNet, load_model

    net, _ = load_model(first)
    fresh = JointNet(seed=9)
    for (a, attr), (b, _) in zip(net.parameters(), fresh.parameters()):
        assert np.array_equal(getattr(a, attr), getattr(b, attr))


def test_train_rerun_with_same_seed_is_bitwise_identical(tmp_path):
    manifest = write_manifest(tmp_path, count=2)
    first = tmp_path / "a.hzn"
    second = tmp_path / "b.hzn"
    args = ["--manifest", str(manifest), "--epochs", "2", "--batch-size", "64", "--seed", "4"]
    assert main(["train", *args, "-o", str(first)]) == 0
    assert main(["train", *args, "-o", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_train_from_patch_container(tmp_path):
    manifest = write_manifest(tmp_path, count=1)
    patches = tmp_path / "patches.bin"
    assert main(["build-dataset", str(manifest), "-o", str(patches), "--seed", "2"]) == 0
    model = tmp_path / "model.hzn"
    rc = main(["train", "--patches", str(patches), "-o", str(model), "--epochs", "1", "--batch-size", "64"])
    assert rc == 0
    assert model.exists()


def test_train_rejects_unlabeled_patches(tmp_path, capsys):
    from hazenet import extract_patches, save_patches

    image = textured_image(np.random.default_rng(0), 30)
    container = tmp_path / "plain.bin"
    save_patches(container, extract_patches(image))
    rc = main(["train", "--patches", str(container), "-o", str(tmp_path / "m.hzn")])
    assert rc == 2
    assert "unlabeled" in capsys.readouterr().err


def test_train_requires_exactly_one_source(tmp_path, capsys):
    rc = main(["train", "-o", str(tmp_path / "m.hzn")])
    assert rc == 2
    assert "exactly one" in capsys.readouterr().err


def test_dehaze_and_eval_end_to_end(tmp_path, capsys):
    manifest = write_manifest(tmp_path, count=2, size=40)
    model = tmp_path / "model.hzn"
    assert main(["train", "--manifest", str(manifest), "-o", str(model), "--epochs", "2",
                 "--batch-size", "128", "--seed", "0"]) == 0
    image_path, depth_path = write_scene(tmp_path, seed=55, size=45, stem="holdout")
    hazy = tmp_path / "hazy.png"
    assert main(["synth", str(image_path), str(depth_path), "-o", str(hazy), "--beta", "0.8",
                 "--airlight", "0.85,0.85,0.85"]) == 0
    out = tmp_path / "dehazed.png"
    rc = main(["dehaze", str(hazy), "--model", str(model), "-o", str(out), "--emit-tmap"])
    assert rc == 0
    capsys.readouterr()
    assert read_image(out).shape == read_image(hazy).shape
    assert (tmp_path / "dehazed_tmap.png").exists()

    rc = main(["eval", str(out), str(image_path), "--machine"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    machine = lines[-1]
    parts = dict(item.split("=") for item in machine.split())
    assert float(parts["psnr"]) > 0.0
    assert -1.0 <= float(parts["ssim"]) <= 1.0


def test_eval_identical_images_reports_infinite_psnr(tmp_path, capsys):
    image_path, _ = write_scene(tmp_path, seed=7)
    rc = main(["eval", str(image_path), str(image_path), "--machine"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PSNR: inf dB" in out
    assert "SSIM: 1.000000" in out
    machine = out.strip().splitlines()[-1]
    parts = dict(item.split("=") for item in machine.split())
    assert math.isinf(float(parts["psnr"]))
    assert float(parts["ssim"]) == 1.0


def test_machine_line_round_trips_values(tmp_path, capsys):
    from hazenet import psnr, ssim

    a_path, _ = write_scene(tmp_path, seed=8)
    b_path, _ = write_scene(tmp_path, seed=9, stem="other")
    assert main(["eval", str(a_path), str(b_path), "--machine"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    human_psnr = float(out[0].split()[1])
    machine = dict(item.split("=") for item in out[-1].split())
    # the machine line parses back to exactly the computed metrics
    assert float(machine["psnr"]) == psnr(read_image(b_path), read_image(a_path))
    assert float(machine["ssim"]) == ssim(read_image(b_path), read_image(a_path))
    assert float(machine["psnr"]) == pytest.approx(human_psnr, abs=5e-5)


def test_missing_input_gives_io_exit_code(tmp_path, capsys):
    rc = main(["eval", str(tmp_path / "nope.png"), str(tmp_path / "nope.png")])
    assert rc == 3
    rc = main(["dehaze", str(tmp_path / "nope.png"), "--model", str(tmp_path / "m.hzn"),
               "-o", str(tmp_path / "out.png")])
    assert rc == 3


def test_usage_error_exits_with_code_two(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["synth"])
    assert excinfo.value.code == 2


def test_dimension_mismatch_is_usage_error(tmp_path, capsys):
    image_path, _ = write_scene(tmp_path, seed=10, size=40)
    depth_path = tmp_path / "small_depth.png"
    write_gray(np.random.default_rng(0).random((20, 20)), depth_path, bits=16)
    rc = main(["synth", str(image_path), str(depth_path), "-o", str(tmp_path / "h.png"),
               "--beta", "0.5", "--airlight", "0.9,0.9,0.9"])
    assert rc == 2


def test_cg_iteration_cap_gives_numeric_exit_code(tmp_path, capsys):
    manifest = write_manifest(tmp_path, count=1)
    model = tmp_path / "model.hzn"
    assert main(["train", "--manifest", str(manifest), "-o", str(model), "--epochs", "0"]) == 0
    image_path, depth_path = write_scene(tmp_path, seed=11, size=40, stem="target")
    hazy = tmp_path / "hazy.png"
    assert main(["synth", str(image_path), str(depth_path), "-o", str(hazy), "--beta", "0.8",
                 "--airlight", "0.9,0.9,0.9"]) == 0
    rc = main(["dehaze", str(hazy), "--model", str(model), "-o", str(tmp_path / "out.png"),
               "--cg-max-iters", "1", "--cg-tol", "1e-12"])
    assert rc == 4
    assert "conjugate gradient" in capsys.readouterr().err


def test_dehaze_constant_image_warns_and_succeeds(tmp_path, capsys):
    manifest = write_manifest(tmp_path, count=1)
    model = tmp_path / "model.hzn"
    assert main(["train", "--manifest", str(manifest), "-o", str(model), "--epochs", "0"]) == 0
    flat_path = tmp_path / "flat.png"
    write_image(np.full((40, 40, 3), 0.5), flat_path)
    out = tmp_path / "out.png"
    with pytest.warns(RuntimeWarning, match="all patches"):
        rc = main(["dehaze", str(flat_path), "--model", str(model), "-o", str(out)])
    assert rc == 0
    assert out.exists()


def test_config_file_and_flag_precedence(tmp_path):
    rng = np.random.default_rng(12)
    image = textured_image(rng, 33)
    write_image(image, tmp_path / "img.png")
    write_gray(np.tile(np.linspace(0, 1, 33), (33, 1)), tmp_path / "img_depth.png", bits=16)
    manifest = tmp_path / "m.txt"
    manifest.write_text("img.png img_depth.png\n")
    config = tmp_path / "run.cfg"
    config.write_text("stride=9\nvariance-threshold=0.0\n")

    from_config = tmp_path / "config.bin"
    assert main(["build-dataset", str(manifest), "-o", str(from_config), "--config", str(config)]) == 0
    assert len(load_patches(from_config)) == 9  # origins {0, 9, 18} per axis

    overridden = tmp_path / "flag.bin"
    assert main(["build-dataset", str(manifest), "-o", str(overridden), "--config", str(config),
                 "--stride", "5"]) == 0
    assert len(load_patches(overridden)) == 25  # origins {0, 5, 10, 15, 18} per axis


def test_read_config_file_parses_types(tmp_path):
    config = tmp_path / "t.cfg"
    config.write_text("epochs=12\nlambda=0.5\nbeta-range=0.6,0.9\n# comment\n")
    values = read_config_file(config)
    assert values == {"epochs": 12, "lambda": 0.5, "beta_range": (0.6, 0.9)}
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign\n")
    with pytest.raises(ValueError):
        read_config_file(bad)
