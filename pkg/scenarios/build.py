"""Assemble every src/*.S into build/*.bin, linked at address 0."""

from __future__ import annotations

from pathlib import Path

from virtplat.asm import assemble

HERE = Path(__file__).resolve().parent


def main() -> None:
    out = HERE / "build"
    out.mkdir(exist_ok=True)
    for src in sorted((HERE / "src").glob("*.S")):
        image = assemble(src.read_text(encoding="utf-8"), 0).image
        (out / f"{src.stem}.bin").write_bytes(image)
        print(f"{src.name} -> build/{src.stem}.bin ({len(image)} bytes)")


if __name__ == "__main__":
    main()
