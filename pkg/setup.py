from setuptools import setup, find_packages

setup(
    name="thermo-network",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    setup_requires=['setuptools'],
    install_requires=[
        "pyyaml>=6.0",
        "python-dotenv>=1.0.0",
        "numpy>=1.22",
        "scipy>=1.6",  # cumulative_trapezoid, brentq
    ],
    extras_require={
        'test': ["pytest>=7.0"],
    },
    entry_points={
        'console_scripts': [
            'thermo-network=thermo_network.scripts.thermo_network:main',
        ],
    },
    python_requires=">=3.8",
    description="Simulate and audit open thermodynamic gas networks",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
)
