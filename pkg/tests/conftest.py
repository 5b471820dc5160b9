import json
from pathlib import Path

import pytest

from rslabel.core import BBox, DatasetManifest, ImageRecord, Instance

FIXTURES = Path(__file__).parent / "fixtures"


def make_instance(x, y, w, h, category="ship", source_id="s0", likelihood=None):
    return Instance(
        box=BBox(x, y, w, h), category=category, source_id=source_id, likelihood=likelihood
    )


def make_manifest(name="toy", categories=("ship", "harbor"), images=()):
    return DatasetManifest(name=name, categories=tuple(categories), images=tuple(images))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def small_manifest():
    images = [
        ImageRecord(
            image_id="img0",
            width=800,
            height=600,
            uri="img0.png",
            instances=(
                make_instance(10, 10, 50, 40, "ship", "d/0"),
                make_instance(100, 100, 30, 30, "harbor", "d/1"),
            ),
        ),
        ImageRecord(image_id="img1", width=640, height=480, uri="img1.png"),
    ]
    return make_manifest(images=images)


@pytest.fixture
def selections_doc():
    from rslabel.cli import default_selections_path

    return json.loads(default_selections_path().read_text())
