"""Build step: compile every module and check that global names resolve."""

import builtins
import dis
import importlib
import pathlib
import py_compile
import sys


def code_objects(code):
    yield code
    for const in code.co_consts:
        if hasattr(const, "co_code"):
            yield from code_objects(const)


def main():
    sys.path.insert(0, ".")
    errors = []
    for path in sorted(pathlib.Path(".").glob("*.py")):
        py_compile.compile(str(path), doraise=True)
        module = importlib.import_module(path.stem)
        source = compile(path.read_text(), str(path), "exec")
        for code in code_objects(source):
            for ins in dis.get_instructions(code):
                if ins.opname in ("LOAD_GLOBAL", "LOAD_NAME") and not (
                    hasattr(module, ins.argval) or hasattr(builtins, ins.argval)
                ):
                    errors.append(f"{path}:{ins.starts_line}: undefined name {ins.argval}")
    for e in errors:
        print(e)
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
