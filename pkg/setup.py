from setuptools import find_packages, setup

setup(
    name="formnet",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy>=1.24",
        "pillow>=10.0",
        "pydantic>=2.0.0",
        "prometheus-client>=0.19.0",
        "python-dotenv>=1.0.0",
    ],
    entry_points={
        "console_scripts": [
            "formnet=formnet.__main__:main",
        ],
    },
    description="Form entity extraction with a graph-contrastive transformer",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
)
