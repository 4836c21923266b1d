from pathlib import Path

import pytest

from cellsentry.corpus import FILES, main

SHIPPED = Path(__file__).resolve().parent.parent / "corpus"


@pytest.mark.parametrize("name", sorted(FILES))
def test_shipped_corpus_matches_generator(corpus_dir, name):
    assert (SHIPPED / name).read_text(encoding="utf-8") == (corpus_dir / name).read_text(encoding="utf-8")


def test_regenerate_into_directory(tmp_path, capsys):
    assert main([str(tmp_path / "c")]) == 0
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == sorted(FILES)
