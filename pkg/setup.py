import setuptools


with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()


setuptools.setup(
    name="channellab",
    description="channellab: channels of energy for the linearized energy-critical radial wave equation",
    keywords="wave equation, channels of energy, ground state, numerical analysis",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "pydantic>=2",
        "typing-extensions",
        "pendulum",
    ],
    extras_require={
        "test": ["hypothesis"],
        "docs": ["sphinx", "sphinx_rtd_theme"],
    },
    entry_points={
        "console_scripts": [
            "channellab=channellab.cli:main",
        ],
    },
)
