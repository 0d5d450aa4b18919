import hashlib

from pathlib import Path


TEST_DATA_PATH = Path(__file__).resolve().parent / "data"


def assert_hashes_equal(filename_1, filename_2):
    """Use two hash algorithms to assert files are equal"""
    assert_sha256_equal(filename_1, filename_2)
    assert_md5_equal(filename_1, filename_2)


def assert_sha256_equal(filename_1, filename_2):
    assert sha256(filename_1) == sha256(filename_2)


def assert_md5_equal(filename_1, filename_2):
    """Assert both files have the same MD5 sum"""
    with open(filename_1, "rb") as file1, open(filename_2, "rb") as file2:
        md5_1 = hashlib.md5(file1.read()).hexdigest()
        md5_2 = hashlib.md5(file2.read()).hexdigest()
        assert md5_1 == md5_2


def sha256(filename) -> str:
    return hashlib.sha256(Path(filename).read_bytes()).hexdigest()


def tree_hashes(root) -> dict[str, str]:
    """sha256 of every file under a directory, keyed by relative path"""
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): sha256(p) for p in sorted(root.rglob("*")) if p.is_file()
    }
