import numpy as np
import pytest

from jpgnet.checkpoint import Checkpoint, decode, encode, load_checkpoint, save_checkpoint
from jpgnet.errors import BadMagicError, IOFormatError, TruncatedFileError, VersionMismatchError
from jpgnet.imageio import decode_image, load_image, save_image
from jpgnet.networks import build_unet, pfunet_config, pfunet_forward


def small_net(seed=0):
    return build_unet(pfunet_config(base_width=2, input_size=16, convs_per_block=1, head_width=4), seed=seed)


class TestCheckpoint:
    def test_encode_decode_roundtrip(self):
        rng = np.random.default_rng(0)
        ck = Checkpoint({"a": rng.normal(size=(2, 3)), "b/c": rng.normal(size=4), "s": np.array(1.5)}, {"k": 1})
        back = decode(encode(ck))
        assert back.meta == {"k": 1}
        for name, arr in ck.tensors.items():
            np.testing.assert_array_equal(back.tensors[name], arr)

    def test_save_load_save_byte_identical(self, tmp_path):
        net = small_net()
        p1 = save_checkpoint(tmp_path / "a.ckpt", {"pfu": net}, {"seed": 0})
        ck = load_checkpoint(p1)
        other = small_net(seed=99)
        other.load_state_dict(ck.subset("pfu"))
        p2 = save_checkpoint(tmp_path / "b.ckpt", {"pfu": other}, ck.meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_inference_equal_after_load(self, tmp_path):
        net = small_net().eval()
        x = np.random.default_rng(1).random((1, 3, 16, 16))
        before = pfunet_forward(net, x)[0].data
        path = save_checkpoint(tmp_path / "n.ckpt", {"pfu": net})
        fresh = small_net(seed=5).eval()
        fresh.load_state_dict(load_checkpoint(path).subset("pfu"))
        np.testing.assert_array_equal(pfunet_forward(fresh, x)[0].data, before)

    def test_float32_option(self):
        ck = Checkpoint({"w": np.array([0.1, 0.2])})
        back = decode(encode(ck, "float32"))
        np.testing.assert_array_equal(back.tensors["w"], np.array([0.1, 0.2], dtype=np.float32))

    def test_bad_magic(self):
        buf = bytearray(encode(Checkpoint({"w": np.ones(2)})))
        buf[:4] = b"XXXX"
        with pytest.raises(BadMagicError):
            decode(bytes(buf))

    def test_version_mismatch(self):
        buf = bytearray(encode(Checkpoint({"w": np.ones(2)})))
        buf[4] = 2
        with pytest.raises(VersionMismatchError):
            decode(bytes(buf))

    @pytest.mark.parametrize("cut", [5, 12, 20, -3])
    def test_truncated(self, cut):
        buf = encode(Checkpoint({"w": np.ones(2)}, {"x": 1}))
        with pytest.raises(TruncatedFileError):
            decode(buf[:cut])

    def test_trailing_bytes(self):
        with pytest.raises(IOFormatError):
            decode(encode(Checkpoint({"w": np.ones(2)})) + b"\0")

    def test_missing_file(self, tmp_path):
        with pytest.raises(IOFormatError):
            load_checkpoint(tmp_path / "nope.ckpt")


class TestImages:
    @pytest.mark.parametrize("ext,c", [(".png", 3), (".png", 1), (".ppm", 3), (".pgm", 1)])
    def test_roundtrip_on_grid(self, tmp_path, ext, c):
        img = np.random.default_rng(0).integers(0, 256, size=(5, 7, c)) / 255.0
        path = save_image(tmp_path / f"x{ext}", img)
        np.testing.assert_array_equal(load_image(path), img)

    def test_pgm_scaling(self):
        buf = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
        out = decode_image(buf)
        assert out.shape == (2, 2, 1)
        np.testing.assert_array_equal(out.ravel(), [0.0, 1.0, 128 / 255, 64 / 255])

    def test_pnm_comment(self):
        buf = b"P5\n# made by hand\n2 1\n255\n" + bytes([10, 20])
        np.testing.assert_array_equal(decode_image(buf).ravel(), [10 / 255, 20 / 255])

    @pytest.mark.parametrize("buf", [b"P5\nx 2\n255\n\0\0\0\0", b"P5\n2 2\n65535\n" + b"\0" * 8, b"GIF89a", b"P3\n1 1\n255\n0 0 0"])
    def test_malformed(self, buf):
        with pytest.raises(IOFormatError):
            decode_image(buf)

    def test_truncated_raster(self):
        with pytest.raises(TruncatedFileError):
            decode_image(b"P6\n2 2\n255\n" + b"\0" * 5)

    def test_truncated_png(self, tmp_path):
        path = save_image(tmp_path / "a.png", np.random.default_rng(0).random((16, 16, 3)))
        with pytest.raises(IOFormatError):
            decode_image(path.read_bytes()[:40])

    def test_unsupported_extension(self, tmp_path):
        with pytest.raises(IOFormatError):
            save_image(tmp_path / "a.jpg", np.zeros((2, 2, 3)))
