import numpy as np
import pytest
import torch
from PIL import Image
from torch import nn

from conftest import tiny_model
from insideout.inference import classify_probabilities, load_image_grayscale, run_inference


class UniformStub(nn.Module):
    def forward(self, batch):
        return torch.zeros(batch.shape[0], 7)


@pytest.fixture
def png(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (48, 48)).astype(np.uint8)
    path = tmp_path / "face.png"
    Image.fromarray(img).save(path)
    return path


class TestClassify:
    def test_uniform_probabilities_tiebreak_to_first_class(self):
        result = classify_probabilities(np.full(7, 1 / 7), "x.png")
        assert result.label == "Anger"
        assert result.confidence == pytest.approx(1 / 7)
        assert [name for name, _ in result.top_k] == ["Anger", "Disgust", "Fear"]

    def test_top_k_non_increasing(self):
        probs = np.array([0.05, 0.4, 0.1, 0.2, 0.05, 0.15, 0.05])
        result = classify_probabilities(probs, "x.png")
        values = [p for _, p in result.top_k]
        assert values == sorted(values, reverse=True)
        assert result.label == "Disgust"
        assert sum(values) <= 1 + 1e-6


class TestRunInference:
    def test_uniform_stub_confidences(self, png):
        results = run_inference(UniformStub(), [png])
        assert len(results) == 1
        assert results[0].ok
        assert results[0].label == "Anger"
        assert results[0].confidence == pytest.approx(1 / 7, abs=1e-6)

    def test_order_preserved_with_errors(self, tmp_path, png):
        bad = tmp_path / "bad.png"
        bad.write_text("not an image")
        results = run_inference(tiny_model(), [png, bad, png])
        assert [r.ok for r in results] == [True, False, True]
        assert results[1].error

    def test_arbitrary_size_images_accepted(self, tmp_path):
        img = np.random.default_rng(1).integers(0, 256, (100, 60)).astype(np.uint8)
        path = tmp_path / "odd.png"
        Image.fromarray(img).save(path)
        results = run_inference(tiny_model(), [path])
        assert results[0].ok

    def test_rgb_input_converted(self, tmp_path):
        rgb = np.random.default_rng(2).integers(0, 256, (48, 48, 3)).astype(np.uint8)
        path = tmp_path / "color.png"
        Image.fromarray(rgb).save(path)
        gray = load_image_grayscale(path)
        assert gray.shape == (48, 48)
        assert run_inference(tiny_model(), [path])[0].ok
