import numpy as np

from firerisk.plots import plot_grid, plot_history, plot_roc
from firerisk.rng import Rng
from firerisk.trainer import TrainHistory


def _png(path):
    data = path.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    return data


def test_history_plot_is_repeatable(tmp_path):
    h = TrainHistory(train_loss=[0.7, 0.5, 0.4], val_loss=[0.72, 0.6, 0.65],
                     val_auc=[0.6, 0.7, 0.7], stopped_epoch=3, best_epoch=2)
    plot_history(h, tmp_path / "a.png")
    plot_history(h, tmp_path / "b.png")
    assert _png(tmp_path / "a.png") == _png(tmp_path / "b.png")


def test_roc_and_grid(tmp_path):
    rng = Rng(1)
    y = (rng.uniform(size=300) < 0.3).astype(float)
    s = 0.5 * y + rng.uniform(size=300)
    plot_roc({"model": (s, y), "chance": (rng.uniform(size=300), y)}, tmp_path / "roc.png")
    _png(tmp_path / "roc.png")
    plot_grid(np.linspace(0, 1, 64).reshape(8, 8), tmp_path / "g.png", "risk", "p")
    _png(tmp_path / "g.png")
