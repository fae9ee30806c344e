from setuptools import setup, find_packages

setup(
    name="objslam",
    version="0.1.0",
    description="Category-level object SLAM with a PCA keypoint shape model.",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "numpy>=1.18",
        "scipy>=1.4",
        "pandas>=1.0",
        "toml>=0.10",
        "matplotlib>=3.2",
        "seaborn>=0.10",
    ],
    extras_require={"test": ["pytest>=5.4"]},
    entry_points={"console_scripts": ["objslam=objslam.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.7",
)
