from setuptools import setup, find_packages

setup(
    name="interlacement-ust",
    version="0.1.0",
    packages=find_packages(include=["app", "app.*"]),
    install_requires=[
        "numpy>=1.26.4",
        "scipy>=1.12.0",
        "networkx>=3.2.1",
        "pydantic>=2.6.3",
        "python-dotenv>=1.0.1",
        "tomli>=2.0.1; python_version < '3.11'",
    ],
    extras_require={
        "dev": [
            "pytest>=7.4.3",
            "black>=24.3.0",
            "ruff>=0.3.0",
        ],
    },
    entry_points={
        "console_scripts": ["ustlab=app.main:main"],
    },
    python_requires=">=3.10",
    description="Uniform spanning trees and forests sampled from the excursion process of wired quotients, with exact potential theory checks",
    author="Your Name",
    author_email="your.email@example.com",
    url="https://github.com/yourusername/interlacement-ust",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
)
