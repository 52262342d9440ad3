import os
from pathlib import Path

import pytest

from detector.baselines import KnnConfig
from detector.models import save_classifier, train_baseline
from detector.sensor import synth_dataset

MAX_RANGE = 262143328850


def write_zone(directory: Path, name: str, energy: str = "1000\n", max_range: int = MAX_RANGE) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "name").write_text(name + "\n", encoding="utf-8")
    (directory / "energy_uj").write_text(energy, encoding="utf-8")
    (directory / "max_energy_range_uj").write_text(f"{max_range}\n", encoding="utf-8")
    return directory


@pytest.fixture
def powercap_root(tmp_path):
    """Two sockets: package-0 with core/uncore/psys sub-zones, and a dram parent."""
    root = tmp_path / "intel-rapl"
    package = write_zone(root / "intel-rapl:0", "package-0")
    write_zone(package / "intel-rapl:0:0", "core", "12345\n")
    write_zone(package / "intel-rapl:0:1", "uncore")
    write_zone(package / "intel-rapl:0:2", "psys")
    write_zone(root / "intel-rapl:1", "dram")
    return root


@pytest.fixture(scope="session")
def small_dataset():
    return synth_dataset(n_benign=4, n_attack=15, traces_per_class=8, n_samples=200, seed=0)


@pytest.fixture(scope="session")
def knn_models(tmp_path_factory, small_dataset):
    """AD and AR KNN models at 120 samples, saved to disk."""
    directory = tmp_path_factory.mktemp("models")
    ad = train_baseline("knn", "ad", small_dataset, 120, knn=KnnConfig(k=3))
    ar = train_baseline("knn", "ar", small_dataset, 120, knn=KnnConfig(k=1))
    ad_path, ar_path = directory / "ad.bin", directory / "ar.bin"
    save_classifier(ad.model, ad_path)
    save_classifier(ar.model, ar_path)
    return ad_path, ar_path


def running_as_root() -> bool:
    return hasattr(os, "geteuid") and os.geteuid() == 0
