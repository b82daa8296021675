#!/usr/bin/env python3
"""
Setup validation script for the Poincaré–Perron asymptotics toolkit.

Checks the interpreter, the numerical dependencies, the environment
settings and the package layout, then runs the fast selftest suites so a
broken installation shows up before a long run does.
"""

import os
import sys
import traceback
from pathlib import Path


def check_python_version():
    """Check if Python version is 3.8 or higher."""
    print("🐍 Checking Python version...")
    if sys.version_info < (3, 8):
        print(f"❌ Python 3.8+ required, found {sys.version}")
        return False
    print(f"✅ Python {sys.version.split()[0]} is supported")
    return True


def check_dependencies():
    """Check if all required dependencies are installed."""
    print("\n📦 Checking dependencies...")

    required_modules = {
        'numpy': 'numpy',
        'scipy': 'scipy',
        'pydantic': 'pydantic',
        'python-dotenv': 'dotenv',
        'hypothesis': 'hypothesis',
        'pytest': 'pytest',
    }
    if sys.version_info < (3, 11):
        required_modules['tomli'] = 'tomli'

    missing_modules = []

    for module, import_name in required_modules.items():
        try:
            imported = __import__(import_name)
            version = getattr(imported, '__version__', '')
            print(f"✅ {module} {version}".rstrip())
        except ImportError:
            print(f"❌ {module} - Not installed")
            missing_modules.append(module)
        except Exception as e:
            print(f"⚠️ {module} - Error: {e}")

    if missing_modules:
        print("\n📋 To install missing dependencies, run:")
        print(f"pip install {' '.join(missing_modules)}")
        return False

    return True


def check_environment():
    """Show the environment overrides in effect."""
    print("\n⚙️ Checking environment configuration...")

    if Path('.env').exists():
        print("✅ .env file found")
    else:
        print("ℹ️ No .env file found (defaults are used)")

    optional_vars = {
        'LOG_LEVEL': 'INFO',
        'LOG_DIR': 'logs',
        'PICARD_TOL': '1e-10',
        'QUAD_PANEL_ORDER': '8',
        'RK_STEP': '0.01',
        'RANDOM_SEED': '0',
    }

    for var, default in optional_vars.items():
        print(f"ℹ️ {var} - {os.getenv(var, default)}")

    return True


def check_configuration():
    """Check configuration validation."""
    print("\n🔧 Checking configuration validation...")

    try:
        from config import VERSION, config
        config.validate()
        print("✅ Configuration validation passed")

        print(f"  - Tool version: {VERSION}")
        print(f"  - Bell cache cap: {config.BELL_MAX_ORDER}")
        print(f"  - Quadrature: {config.QUAD_PANEL_ORDER}-point panels of width {config.QUAD_PANEL_WIDTH}")
        print(f"  - Picard: tol {config.PICARD_TOL}, at most {config.PICARD_MAX_ITER} iterations")
        print(f"  - Reference step: {config.RK_STEP}")

        return True

    except Exception as e:
        print(f"❌ Configuration validation failed: {e}")
        return False


def check_selftest():
    """Run the quick property suites."""
    print("\n🧮 Running selftest suites...")

    try:
        from services.selftest import run_selftest

        results = run_selftest(names=['bell_golden', 'partial_fraction', 'green_identity'])
        failed = [name for name, r in results.items() if not r['passed']]
        for name, r in results.items():
            mark = '✅' if r['passed'] else '❌'
            print(f"{mark} {name}: worst {r['worst']:.3e}")
        return not failed

    except Exception as e:
        print(f"❌ Selftest crashed: {e}")
        print("Traceback:")
        traceback.print_exc()
        return False


def check_file_structure():
    """Check if all required files are present."""
    print("\n📁 Checking file structure...")

    required_files = [
        'main.py',
        'config.py',
        'cli/handlers.py',
        'models/schemas.py',
        'services/bellpoly.py',
        'services/charpoly.py',
        'services/expression.py',
        'services/perturb.py',
        'services/green.py',
        'services/riccati.py',
        'services/solver.py',
        'services/asympt.py',
        'services/reference.py',
        'services/pipeline.py',
        'services/report_writer.py',
        'services/example5.py',
        'services/selftest.py',
        'utils/logger.py',
        'utils/errors.py',
        'requirements.txt',
    ]

    missing_files = []

    for file_path in required_files:
        if Path(file_path).exists():
            print(f"✅ {file_path}")
        else:
            print(f"❌ {file_path} - Missing")
            missing_files.append(file_path)

    if missing_files:
        print(f"\n📋 Missing files: {len(missing_files)}")
        return False

    return True


def main():
    """Run all validation checks."""
    print("🚀 Poincaré–Perron Toolkit - Setup Validation")
    print("=" * 50)

    checks = [
        ("Python Version", check_python_version),
        ("Dependencies", check_dependencies),
        ("File Structure", check_file_structure),
        ("Environment", check_environment),
        ("Configuration", check_configuration),
        ("Selftest", check_selftest),
    ]

    passed = 0
    total = len(checks)

    for name, check_func in checks:
        try:
            if check_func():
                passed += 1
            else:
                print(f"\n❌ {name} check failed")
        except Exception as e:
            print(f"\n💥 {name} check crashed: {e}")
            traceback.print_exc()

    print("\n" + "=" * 50)
    print(f"📊 Validation Results: {passed}/{total} checks passed")

    if passed == total:
        print("🎉 All checks passed! The toolkit is ready to run.")
        print("\n📋 To run the worked example:")
        print("  python main.py example5")
        print("\n📋 To run tests:")
        print("  python -m pytest tests/")
        return True
    else:
        print("⚠️ Some checks failed. Please fix the issues above before running the toolkit.")
        return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
